"""Fiber data model: label taxonomy, dataset file IO, rigid rotations,
centroid centering, and deterministic stratified splitting.

A fiber is an ordered sequence of 3D points (millimeters) with an optional
anatomical label.  Labels form a two-level taxonomy: the coarse Grey/White
split, and the eight named white-matter tracts underneath White.

Dataset file format (UTF-8, LF): lines starting with ``#`` are comments;
each record is ``id<TAB>label<TAB>points`` where label is one of the fine
label names or ``?`` for unlabeled, and points is ``x,y,z`` float triples
joined by ``;``.  Floats are written with Python's shortest round-trip
rendering, so save/load is lossless.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np

from .errors import DatasetError
from .rng import DOMAIN_SPLIT, stream


class FineLabel(enum.Enum):
    GREY = "Grey"
    ARCUATE = "Arcuate"
    CINGULUM = "Cingulum"
    CORTICOSPINAL = "Corticospinal"
    FORCEPS_MAJOR = "ForcepsMajor"
    FORNIX = "Fornix"
    INFERIOR_OCCIPITOFRONTAL = "InferiorOccipitofrontal"
    SUPERIOR_LONGITUDINAL = "SuperiorLongitudinal"
    UNCINATE = "Uncinate"


class CoarseLabel(enum.Enum):
    GREY = "Grey"
    WHITE = "White"


class Level(enum.Enum):
    COARSE = "coarse"
    FINE = "fine"


#: The eight white-matter tract labels, in canonical enumeration order.
WHITE_LABELS: tuple[FineLabel, ...] = tuple(
    lab for lab in FineLabel if lab is not FineLabel.GREY
)

_FINE_BY_NAME = {lab.value: lab for lab in FineLabel}
_COARSE_BY_NAME = {lab.value: lab for lab in CoarseLabel}

AnyLabel = Union[FineLabel, CoarseLabel]


def to_coarse(label: FineLabel) -> CoarseLabel:
    """Total mapping onto the coarse taxonomy: Grey stays, all tracts are White."""
    return CoarseLabel.GREY if label is FineLabel.GREY else CoarseLabel.WHITE


def level_classes(level: Level) -> tuple[AnyLabel, ...]:
    """Class set a model at ``level`` discriminates: Grey/White, or the 8 tracts."""
    if level is Level.COARSE:
        return (CoarseLabel.GREY, CoarseLabel.WHITE)
    return WHITE_LABELS


def label_at_level(label: FineLabel, level: Level) -> AnyLabel:
    return to_coarse(label) if level is Level.COARSE else label


def parse_label(name: str, level: Level = Level.FINE) -> AnyLabel:
    table = _COARSE_BY_NAME if level is Level.COARSE else _FINE_BY_NAME
    try:
        return table[name]
    except KeyError:
        raise DatasetError(f"unknown {level.value} label {name!r}") from None


@dataclass(frozen=True)
class Fiber:
    """Ordered 3D point sequence with an optional fine label.

    ``points`` is an (n, 3) float64 array, n >= 2, all finite; it is frozen
    (read-only) after construction so fibers can be shared freely.
    """

    id: str
    points: np.ndarray
    label: Optional[FineLabel] = None

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"fiber {self.id!r}: points must be (n, 3), got {pts.shape}")
        if pts.shape[0] < 2:
            raise ValueError(f"fiber {self.id!r}: need at least 2 points, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"fiber {self.id!r}: non-finite coordinate")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class RotationSpec:
    """Proper rigid rotation given as a 3x3 matrix (orthonormal, det +1).

    ``tag`` is a short human-readable name ("id", "z:30", ...) carried into
    default-set entries and reports.
    """

    matrix: np.ndarray
    tag: str = "custom"

    def __post_init__(self) -> None:
        mat = np.array(self.matrix, dtype=np.float64, copy=True)
        if mat.shape != (3, 3):
            raise ValueError(f"rotation matrix must be 3x3, got {mat.shape}")
        if not np.all(np.abs(mat.T @ mat - np.eye(3)) <= _ORTHO_TOL):
            raise ValueError("rotation matrix is not orthonormal within 1e-9")
        if abs(np.linalg.det(mat) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation matrix determinant is not +1 within 1e-9")
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)

    def inverse(self) -> "RotationSpec":
        return RotationSpec(self.matrix.T, tag=f"inv({self.tag})")


IDENTITY_ROTATION = RotationSpec(np.eye(3), tag="id")

_AXIS_VECTORS = {"x": 0, "y": 1, "z": 2}


def rotation_about_axis(axis: str, degrees: float) -> RotationSpec:
    """Rotation by ``degrees`` about a coordinate axis ('x', 'y', or 'z')."""
    if axis not in _AXIS_VECTORS:
        raise ValueError(f"axis must be one of x, y, z; got {axis!r}")
    theta = math.radians(degrees)
    c, s = math.cos(theta), math.sin(theta)
    if axis == "x":
        mat = [[1, 0, 0], [0, c, -s], [0, s, c]]
    elif axis == "y":
        mat = [[c, 0, s], [0, 1, 0], [-s, 0, c]]
    else:
        mat = [[c, -s, 0], [s, c, 0], [0, 0, 1]]
    return RotationSpec(np.array(mat, dtype=np.float64), tag=f"{axis}:{degrees:g}")


def parse_rotation_tag(tag: str) -> RotationSpec:
    """Parse a rotation tag: ``id`` or ``<axis>:<degrees>`` (e.g. ``z:30``)."""
    tag = tag.strip()
    if tag == "id":
        return IDENTITY_ROTATION
    axis, sep, deg = tag.partition(":")
    if not sep or axis not in _AXIS_VECTORS:
        raise ValueError(f"bad rotation tag {tag!r}; expected 'id' or 'axis:degrees'")
    try:
        degrees = float(deg)
    except ValueError:
        raise ValueError(f"bad rotation angle in tag {tag!r}") from None
    return rotation_about_axis(axis, degrees)


@dataclass(frozen=True)
class FiberDataset:
    """Immutable collection of fibers with unique ids plus provenance text."""

    fibers: tuple[Fiber, ...]
    provenance: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "fibers", tuple(self.fibers))
        seen: set[str] = set()
        for f in self.fibers:
            if f.id in seen:
                raise DatasetError(f"duplicate fiber id {f.id!r}")
            seen.add(f.id)

    def __len__(self) -> int:
        return len(self.fibers)

    def __iter__(self) -> Iterator[Fiber]:
        return iter(self.fibers)

    def label_counts(self) -> dict[Optional[FineLabel], int]:
        counts: dict[Optional[FineLabel], int] = {}
        for f in self.fibers:
            counts[f.label] = counts.get(f.label, 0) + 1
        return counts


def rotate_fiber(fiber: Fiber, rotation: RotationSpec) -> Fiber:
    """Apply a rigid rotation to every point; id and label are preserved."""
    return Fiber(fiber.id, fiber.points @ rotation.matrix.T, fiber.label)


def center_fiber(fiber: Fiber) -> Fiber:
    """Translate the fiber so its centroid is the origin."""
    return Fiber(fiber.id, fiber.points - fiber.points.mean(axis=0), fiber.label)


def rotate_dataset(dataset: FiberDataset, rotation: RotationSpec) -> FiberDataset:
    """Rotate every fiber; provenance records the rotation tag."""
    base = dataset.provenance + " | " if dataset.provenance else ""
    return FiberDataset(
        tuple(rotate_fiber(f, rotation) for f in dataset.fibers),
        base + f"rotated {rotation.tag}",
    )


def _format_points(points: np.ndarray) -> str:
    return ";".join(f"{x!r},{y!r},{z!r}" for x, y, z in points.tolist())


_HEADER = "# fs2net dataset v1"


def save_dataset(dataset: FiberDataset, path: Union[str, Path]) -> None:
    """Write the line-oriented dataset format; round-trips losslessly."""
    lines = [_HEADER]
    if dataset.provenance:
        lines.append("# provenance: " + " ".join(dataset.provenance.split()))
    for f in dataset.fibers:
        label = f.label.value if f.label is not None else "?"
        lines.append(f"{f.id}\t{label}\t{_format_points(f.points)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _parse_points(text: str, lineno: int) -> np.ndarray:
    triples = []
    for chunk in text.split(";"):
        parts = chunk.split(",")
        if len(parts) != 3:
            raise DatasetError(f"line {lineno}: point {chunk!r} is not an x,y,z triple")
        try:
            triples.append([float(p) for p in parts])
        except ValueError:
            raise DatasetError(f"line {lineno}: unparseable coordinate in {chunk!r}") from None
    return np.array(triples, dtype=np.float64)


def load_dataset(path: Union[str, Path]) -> FiberDataset:
    """Load a dataset file, validating format, labels, and id uniqueness."""
    fibers: list[Fiber] = []
    seen: set[str] = set()
    provenance = ""
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if body.startswith("provenance:"):
                provenance = body[len("provenance:"):].strip()
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise DatasetError(
                f"line {lineno}: expected 3 tab-separated fields, got {len(fields)}"
            )
        fid, label_name, points_text = fields
        if fid in seen:
            raise DatasetError(f"line {lineno}: duplicate fiber id {fid!r}")
        seen.add(fid)
        label = None if label_name == "?" else parse_label(label_name)
        points = _parse_points(points_text, lineno)
        if points.shape[0] < 2:
            raise DatasetError(f"line {lineno}: fiber {fid!r} has fewer than 2 points")
        if not np.all(np.isfinite(points)):
            raise DatasetError(f"line {lineno}: non-finite coordinate in fiber {fid!r}")
        fibers.append(Fiber(fid, points, label))
    return FiberDataset(tuple(fibers), provenance)


# Fixed stratum order for splitting: fine labels in enum order, then unlabeled.
_STRATA: tuple[Optional[FineLabel], ...] = tuple(FineLabel) + (None,)


def split_dataset(
    dataset: FiberDataset, fraction: float, seed: int
) -> tuple[FiberDataset, FiberDataset]:
    """Deterministic stratified split.

    Each fine label's fibers are split independently: the first part receives
    floor(count * fraction) of them, chosen by a seeded shuffle whose stream
    depends only on (seed, label), so the partition is reproducible and
    schedule-independent.  Both parts keep the original dataset order.
    """
    if not (0.0 < fraction < 1.0):
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    first_idx: list[int] = []
    second_idx: list[int] = []
    for stratum_ix, label in enumerate(_STRATA):
        indices = [i for i, f in enumerate(dataset.fibers) if f.label is label]
        if not indices:
            continue
        rng = stream(seed, DOMAIN_SPLIT, stratum_ix)
        perm = rng.permutation(len(indices))
        n_first = math.floor(len(indices) * fraction)
        chosen = {indices[j] for j in perm[:n_first]}
        first_idx.extend(i for i in indices if i in chosen)
        second_idx.extend(i for i in indices if i not in chosen)
    first = tuple(dataset.fibers[i] for i in sorted(first_idx))
    second = tuple(dataset.fibers[i] for i in sorted(second_idx))
    note = f"split fraction={fraction} seed={seed}"
    base = dataset.provenance + " | " if dataset.provenance else ""
    return (
        FiberDataset(first, base + note + " part=1"),
        FiberDataset(second, base + note + " part=2"),
    )
