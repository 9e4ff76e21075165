"""Seeded synthetic fiber corpus generator.

Produces a labeled corpus with the statistical shape of real tractography
exports: eight white-matter classes, each a distinct smooth 3D template
curve sampled at a random length between 36 and 120 points with isotropic
Gaussian jitter and a small random translation, plus a dominant Grey class
of short arcs scattered on a spherical shell that surrounds the templates.

Template curves (t in [0, 1], coordinates in mm):

    Arcuate                  semicircle of radius 6 in the xy plane
    Cingulum                 270-degree arc of radius 5 in the xy plane
    Corticospinal            straight diagonal segment, length ~9.5
    ForcepsMajor             half-ellipse (7 x 3) with a gentle z drift
    Fornix                   helix, radius 3.5, 1.5 turns, pitch 8
    InferiorOccipitofrontal  shallow arc bowing 4 in z while running 12 in x
    SuperiorLongitudinal     full sine wave, amplitude 4, run 9 in x
    Uncinate                 hook: slow start curling into a sharp bend

The shapes are mutually non-congruent under rotation, which makes
rotation-augmented classification a meaningful exercise.  All randomness is
drawn from per-fiber streams keyed by (seed, fiber index), so output is
byte-reproducible and independent of generation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fibers import Fiber, FiberDataset, FineLabel, WHITE_LABELS
from .rng import DOMAIN_GEN, stream

#: Radius of the spherical shell carrying Grey fibers.
GREY_SHELL_RADIUS = 9.0
#: Angular span range (radians) of a Grey arc.
GREY_ARC_SPAN = (0.3, 0.9)
#: Half-width of the uniform per-fiber translation offset (mm).
OFFSET_HALF_WIDTH = 2.0

_PI = math.pi


def _arc(t: np.ndarray) -> np.ndarray:
    return np.stack([6 * np.sin(_PI * t), 6 - 6 * np.cos(_PI * t), np.zeros_like(t)], axis=1)


def _c_curve(t: np.ndarray) -> np.ndarray:
    return np.stack([5 * np.cos(1.5 * _PI * t), 5 * np.sin(1.5 * _PI * t), np.zeros_like(t)], axis=1)


def _straight(t: np.ndarray) -> np.ndarray:
    return np.stack([6 * t, 2 * t, 7 * t], axis=1)


def _u_curve(t: np.ndarray) -> np.ndarray:
    return np.stack([7 * np.cos(_PI * t), 3 * np.sin(_PI * t), 1.5 * t], axis=1)


def _helix(t: np.ndarray) -> np.ndarray:
    return np.stack([3.5 * np.cos(3 * _PI * t), 3.5 * np.sin(3 * _PI * t), 8 * t], axis=1)


def _shallow(t: np.ndarray) -> np.ndarray:
    return np.stack([12 * t, np.zeros_like(t), 4 * np.sin(_PI * t)], axis=1)


def _s_curve(t: np.ndarray) -> np.ndarray:
    return np.stack([9 * t, 4 * np.sin(2 * _PI * t), np.zeros_like(t)], axis=1)


def _hook(t: np.ndarray) -> np.ndarray:
    return np.stack([7 * t, 5 * t**3, -5 * t**2], axis=1)


TEMPLATES: dict[FineLabel, Callable[[np.ndarray], np.ndarray]] = {
    FineLabel.ARCUATE: _arc,
    FineLabel.CINGULUM: _c_curve,
    FineLabel.CORTICOSPINAL: _straight,
    FineLabel.FORCEPS_MAJOR: _u_curve,
    FineLabel.FORNIX: _helix,
    FineLabel.INFERIOR_OCCIPITOFRONTAL: _shallow,
    FineLabel.SUPERIOR_LONGITUDINAL: _s_curve,
    FineLabel.UNCINATE: _hook,
}


def template_points(label: FineLabel, length: int) -> np.ndarray:
    """Noise-free template evaluation at ``length`` uniformly spaced samples."""
    t = np.linspace(0.0, 1.0, length)
    return TEMPLATES[label](t)


@dataclass(frozen=True)
class GenConfig:
    """Corpus shape: class sizes, grey skew, jitter, determinism seed."""

    per_white_class: int
    grey_fraction: float = 0.9
    noise_sigma: float = 0.3
    seed: int = 0
    length_range: tuple[int, int] = (36, 120)

    def __post_init__(self) -> None:
        if self.per_white_class < 1:
            raise ValueError("per_white_class must be >= 1")
        if not (0.0 <= self.grey_fraction < 1.0):
            raise ValueError("grey_fraction must be in [0, 1)")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be non-negative")
        lo, hi = self.length_range
        if not (2 <= lo <= hi <= 1000):
            raise ValueError(f"length_range {self.length_range} outside [2, 1000] or inverted")


def grey_count(cfg: GenConfig) -> int:
    """Grey fibers needed so they form grey_fraction of the corpus."""
    white_total = len(WHITE_LABELS) * cfg.per_white_class
    return round(white_total * cfg.grey_fraction / (1.0 - cfg.grey_fraction))


def _draw_length(rng: np.random.Generator, cfg: GenConfig) -> int:
    lo, hi = cfg.length_range
    return int(rng.integers(lo, hi, endpoint=True))


def _white_fiber(label: FineLabel, index: int, serial: int, cfg: GenConfig) -> Fiber:
    rng = stream(cfg.seed, DOMAIN_GEN, index)
    length = _draw_length(rng, cfg)
    offset = rng.uniform(-OFFSET_HALF_WIDTH, OFFSET_HALF_WIDTH, 3)
    pts = template_points(label, length) + offset
    if cfg.noise_sigma > 0.0:
        pts = pts + rng.normal(0.0, cfg.noise_sigma, (length, 3))
    return Fiber(f"{label.value.lower()}{serial:05d}", pts, label)


def _grey_fiber(index: int, serial: int, cfg: GenConfig) -> Fiber:
    rng = stream(cfg.seed, DOMAIN_GEN, index)
    length = _draw_length(rng, cfg)
    # Random point on the shell plus an orthonormal tangent direction.
    normal = rng.normal(size=3)
    normal /= np.linalg.norm(normal)
    raw = rng.normal(size=3)
    tangent = raw - np.dot(raw, normal) * normal
    tangent /= np.linalg.norm(tangent)
    span = rng.uniform(*GREY_ARC_SPAN)
    radius = GREY_SHELL_RADIUS + rng.uniform(-1.0, 1.0)
    theta = (np.linspace(0.0, 1.0, length) - 0.5) * span
    pts = radius * (np.cos(theta)[:, None] * normal + np.sin(theta)[:, None] * tangent)
    if cfg.noise_sigma > 0.0:
        pts = pts + rng.normal(0.0, cfg.noise_sigma, (length, 3))
    return Fiber(f"grey{serial:05d}", pts, FineLabel.GREY)


def generate_corpus(cfg: GenConfig) -> FiberDataset:
    """Generate the full labeled corpus; deterministic in cfg alone."""
    fibers: list[Fiber] = []
    index = 0
    for label in WHITE_LABELS:
        for serial in range(cfg.per_white_class):
            fibers.append(_white_fiber(label, index, serial, cfg))
            index += 1
    for serial in range(grey_count(cfg)):
        fibers.append(_grey_fiber(index, serial, cfg))
        index += 1
    lo, hi = cfg.length_range
    provenance = (
        f"synthgen v1 seed={cfg.seed} per_white_class={cfg.per_white_class} "
        f"grey_fraction={cfg.grey_fraction!r} noise_sigma={cfg.noise_sigma!r} "
        f"length_range={lo}-{hi}"
    )
    return FiberDataset(tuple(fibers), provenance)
