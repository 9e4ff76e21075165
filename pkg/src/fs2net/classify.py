"""Default-set construction and argmax similarity classification.

The trained comparator only answers "same class or not", so labeling uses a
default set: labeled reference fibers, optionally replicated under a list of
rigid rotations so that rotated (unregistered) test fibers still find a
well-matched reference.  References are rotated in raw space and then sent
through the same curvature preprocessing as test fibers.

A test fiber is scored against every entry; it takes the label of the entry
with the maximum score.  Ties fall back to the higher per-class mean score,
then to class enumeration order, so predictions never depend on entry order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DatasetError, DefaultSetError
from .fibers import (
    AnyLabel,
    Fiber,
    FiberDataset,
    IDENTITY_ROTATION,
    Level,
    RotationSpec,
    label_at_level,
    level_classes,
    parse_label,
    rotate_fiber,
)
from .preprocess import FEATURE_LEN, ProcessedFiber, prune_and_pad, stack_features
from .rng import DOMAIN_DEFAULT_SET, stream
from .siamese import SiameseModel, embed_batch, scores_from_embeddings

_REQUIRED_COLUMNS = ("id", "truth", "pred", "score")


@dataclass(frozen=True)
class DefaultSetEntry:
    fiber: ProcessedFiber
    label: AnyLabel
    rotation: str  # rotation tag, "id" for the unrotated entry


@dataclass(frozen=True)
class DefaultSet:
    level: Level
    entries: tuple[DefaultSetEntry, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        if not self.entries:
            raise DefaultSetError("default set has no entries")
        present = {e.label for e in self.entries}
        for cls in level_classes(self.level):
            if cls not in present:
                raise DefaultSetError(f"default set has no entry for class {cls.value}")

    def __len__(self) -> int:
        return len(self.entries)


def build_default_set(
    dataset: FiberDataset,
    level: Level,
    per_class: int = 5,
    rotations: Sequence[RotationSpec] = (),
    seed: int = 0,
) -> DefaultSet:
    """Sample per_class raw fibers per class and emit one entry per rotation
    (identity included), rotating before preprocessing.

    Sampling is without replacement from per-class streams keyed by
    (seed, class index); total size = #classes * per_class * (1 + #rotations).
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    classes = level_classes(level)
    pools: dict[AnyLabel, list[Fiber]] = {c: [] for c in classes}
    for f in dataset:
        if f.label is None:
            continue
        cls = label_at_level(f.label, level)
        if cls in pools:
            pools[cls].append(f)
    entries: list[DefaultSetEntry] = []
    variants: tuple[RotationSpec, ...] = (IDENTITY_ROTATION, *rotations)
    for ci, cls in enumerate(classes):
        pool = pools[cls]
        if len(pool) < per_class:
            raise DefaultSetError(
                f"class {cls.value} has {len(pool)} fibers; need {per_class}"
            )
        rng = stream(seed, DOMAIN_DEFAULT_SET, ci)
        chosen = rng.permutation(len(pool))[:per_class]
        for ix in chosen:
            for rot in variants:
                raw = pool[ix] if rot is IDENTITY_ROTATION else rotate_fiber(pool[ix], rot)
                entries.append(DefaultSetEntry(prune_and_pad(raw), cls, rot.tag))
    return DefaultSet(level, tuple(entries))


@dataclass
class EmbeddedDefaults:
    """Default set with embeddings precomputed for one specific model."""

    level: Level
    embeddings: np.ndarray  # (N, E)
    labels: tuple[AnyLabel, ...]
    class_order: tuple[AnyLabel, ...]


def prepare_defaults(
    model: SiameseModel, defaults: DefaultSet, threads: int = 1
) -> EmbeddedDefaults:
    if defaults.level is not model.level:
        raise DefaultSetError(
            f"default set level {defaults.level.value} != model level {model.level.value}"
        )
    feats = stack_features([e.fiber for e in defaults.entries])
    return EmbeddedDefaults(
        defaults.level,
        embed_batch(model, feats, threads=threads),
        tuple(e.label for e in defaults.entries),
        level_classes(defaults.level),
    )


def argmax_label(
    class_order: Sequence[AnyLabel],
    per_class_max: dict[AnyLabel, float],
    per_class_mean: dict[AnyLabel, float],
) -> AnyLabel:
    """Best class by max score, then mean score, then enumeration order."""
    best = None
    for cls in class_order:
        if cls not in per_class_max:
            continue
        key = (per_class_max[cls], per_class_mean[cls])
        if best is None or key > best[0]:
            best = (key, cls)
    if best is None:
        raise DefaultSetError("no scored classes")
    return best[1]


@dataclass(frozen=True)
class Classification:
    label: AnyLabel
    best_score: float
    per_class_max: dict[AnyLabel, float]


def _classify_embedded(
    model: SiameseModel, prepared: EmbeddedDefaults, emb: np.ndarray
) -> Classification:
    scores = scores_from_embeddings(model, prepared.embeddings, emb)
    per_max: dict[AnyLabel, float] = {}
    per_sum: dict[AnyLabel, float] = {}
    per_n: dict[AnyLabel, int] = {}
    for label, s in zip(prepared.labels, scores.tolist()):
        if label not in per_max or s > per_max[label]:
            per_max[label] = s
        per_sum[label] = per_sum.get(label, 0.0) + s
        per_n[label] = per_n.get(label, 0) + 1
    per_mean = {c: per_sum[c] / per_n[c] for c in per_max}
    label = argmax_label(prepared.class_order, per_max, per_mean)
    return Classification(label, per_max[label], per_max)


def classify_fiber(
    model: SiameseModel,
    defaults: Union[DefaultSet, EmbeddedDefaults],
    fiber: ProcessedFiber,
) -> Classification:
    """Score one fiber against every default entry and take the argmax label."""
    prepared = defaults if isinstance(defaults, EmbeddedDefaults) else prepare_defaults(model, defaults)
    emb = embed_batch(model, fiber.features[None])[0]
    return _classify_embedded(model, prepared, emb)


@dataclass(frozen=True)
class PredictionRow:
    id: str
    truth: str  # level-appropriate label name, or "?" when unlabeled
    pred: str
    score: float


def classify_all(
    model: SiameseModel,
    defaults: Union[DefaultSet, EmbeddedDefaults],
    fibers: Sequence[ProcessedFiber],
    threads: int = 1,
) -> list[PredictionRow]:
    """Prediction table over a processed dataset (any iterable of fibers)."""
    prepared = (
        defaults
        if isinstance(defaults, EmbeddedDefaults)
        else prepare_defaults(model, defaults, threads=threads)
    )
    fibers = list(fibers)
    rows: list[PredictionRow] = []
    if not fibers:
        return rows
    embs = embed_batch(model, stack_features(fibers), threads=threads)
    for f, emb in zip(fibers, embs):
        result = _classify_embedded(model, prepared, emb)
        truth = "?" if f.label is None else label_at_level(f.label, model.level).value
        rows.append(PredictionRow(f.id, truth, result.label.value, result.best_score))
    return rows


def save_predictions(rows: Sequence[PredictionRow], path: Union[str, Path]) -> None:
    lines = ["\t".join(_REQUIRED_COLUMNS)]
    for r in rows:
        lines.append(f"{r.id}\t{r.truth}\t{r.pred}\t{r.score!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_predictions(path: Union[str, Path]) -> list[PredictionRow]:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or tuple(lines[0].split("\t")) != _REQUIRED_COLUMNS:
        raise DatasetError(f"{path}: missing prediction table header")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != 4:
            raise DatasetError(f"line {lineno}: expected 4 tab-separated fields")
        fid, truth, pred, score_text = fields
        try:
            score = float(score_text)
        except ValueError:
            raise DatasetError(f"line {lineno}: bad score {score_text!r}") from None
        rows.append(PredictionRow(fid, truth, pred, score))
    return rows


# ---------------------------------------------------------------------------
# default-set persistence
# ---------------------------------------------------------------------------

_DEFAULTSET_HEADER = "#defaultset v1"


def save_default_set(defaults: DefaultSet, path: Union[str, Path]) -> None:
    lines = [_DEFAULTSET_HEADER, f"#level: {defaults.level.value}"]
    for e in defaults.entries:
        points = ";".join(f"{x!r},{y!r},{z!r}" for x, y, z in e.fiber.features.tolist())
        lines.append(
            f"{e.fiber.id}\t{e.label.value}\t{points}\t{e.fiber.valid_len}\t{e.rotation}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_default_set(path: Union[str, Path]) -> DefaultSet:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0].strip() != _DEFAULTSET_HEADER:
        raise DatasetError(f"{path}: missing {_DEFAULTSET_HEADER!r} header")
    if len(lines) < 2 or not lines[1].startswith("#level:"):
        raise DatasetError(f"{path}: missing '#level:' header")
    level = Level(lines[1].split(":", 1)[1].strip())
    entries: list[DefaultSetEntry] = []
    for lineno, raw in enumerate(lines[2:], start=3):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise DatasetError(f"line {lineno}: expected 5 tab-separated fields")
        eid, label_name, points_text, valid_text, tag = fields
        label = parse_label(label_name, level)
        rows = []
        for chunk in points_text.split(";"):
            parts = chunk.split(",")
            if len(parts) != 3:
                raise DatasetError(f"line {lineno}: point {chunk!r} is not a triple")
            rows.append([float(p) for p in parts])
        feats = np.array(rows, dtype=np.float64)
        if feats.shape != (FEATURE_LEN, 3):
            raise DatasetError(f"line {lineno}: expected {FEATURE_LEN} points")
        try:
            fiber = ProcessedFiber(eid, feats, int(valid_text))
        except ValueError as exc:
            raise DatasetError(f"line {lineno}: {exc}") from None
        entries.append(DefaultSetEntry(fiber, label, tag))
    return DefaultSet(level, tuple(entries))
