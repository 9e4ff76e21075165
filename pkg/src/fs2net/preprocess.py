"""Curvature-based pruning and zero-padding into fixed 100x3 features.

Variable-length fibers are reduced to a fixed-size input: each point gets a
curvature score (sum, over the xy/xz/yz coordinate planes, of the projected
central second difference at offsets 1 and 4 — the two offsets make the
score multi-scale), the lowest-scoring quarter of points is pruned, and the
surviving points are written in their original order into a 100x3 matrix
whose tail rows are zero.  Endpoints carry an infinite score so fiber
termini are always retained.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from .errors import DatasetError
from .fibers import Fiber, FiberDataset, FineLabel, center_fiber, parse_label

#: Fixed feature length (rows of the network input).
FEATURE_LEN = 100
#: Fraction of points retained by pruning.
KEEP_FRACTION = 0.75
#: Neighbor offsets used for the multi-scale second differences.
CURVATURE_OFFSETS = (1, 4)

_PLANES = ((0, 1), (0, 2), (1, 2))  # xy, xz, yz


@dataclass(frozen=True)
class ProcessedFiber:
    """Fixed 100x3 feature matrix with the number of non-padding rows."""

    id: str
    features: np.ndarray
    valid_len: int
    label: Optional[FineLabel] = None

    def __post_init__(self) -> None:
        feats = np.array(self.features, dtype=np.float64, copy=True)
        if feats.shape != (FEATURE_LEN, 3):
            raise ValueError(
                f"fiber {self.id!r}: features must be ({FEATURE_LEN}, 3), got {feats.shape}"
            )
        if not (2 <= self.valid_len <= FEATURE_LEN):
            raise ValueError(f"fiber {self.id!r}: valid_len {self.valid_len} out of range")
        if np.any(feats[self.valid_len :] != 0.0):
            raise ValueError(f"fiber {self.id!r}: nonzero padding rows past valid_len")
        feats.flags.writeable = False
        object.__setattr__(self, "features", feats)


def kept_length(n: int) -> int:
    """Rows retained for a source fiber of length n: min(100, ceil(0.75 n))."""
    return min(FEATURE_LEN, (3 * n + 3) // 4)


def curvature_scores(fiber: Fiber) -> np.ndarray:
    """Per-point curvature score; endpoints get +inf so they are always kept.

    For interior index i and offset k in {1, 4} with both neighbors present,
    the second difference d = p[i-k] - 2 p[i] + p[i+k] contributes the sum of
    its Euclidean norms projected on the xy, xz, and yz planes.  Offsets whose
    neighbors fall outside the fiber contribute nothing.
    """
    pts = fiber.points
    n = pts.shape[0]
    scores = np.zeros(n)
    for k in CURVATURE_OFFSETS:
        if n < 2 * k + 1:
            continue
        d = pts[: n - 2 * k] - 2.0 * pts[k : n - k] + pts[2 * k :]
        contrib = np.zeros(n - 2 * k)
        for a, b in _PLANES:
            contrib += np.hypot(d[:, a], d[:, b])
        scores[k : n - k] += contrib
    scores[0] = np.inf
    scores[n - 1] = np.inf
    return scores


def prune_and_pad(fiber: Fiber) -> ProcessedFiber:
    """Center the fiber, drop its lowest-curvature quarter, pad to 100 rows.

    Selection keeps the m = kept_length(n) highest-scoring points; ties keep
    the lower index.  Kept points stay in original order, so the output rows
    [0, m) form a subsequence of the (centered) input.
    """
    n = len(fiber)
    if n < 2:
        raise ValueError(f"fiber {fiber.id!r}: need at least 2 points")
    centered = center_fiber(fiber)
    scores = curvature_scores(centered)
    m = kept_length(n)
    # Primary key: descending score; secondary: ascending index.
    order = np.lexsort((np.arange(n), -scores))
    kept = np.sort(order[:m])
    feats = np.zeros((FEATURE_LEN, 3))
    feats[:m] = centered.points[kept]
    return ProcessedFiber(fiber.id, feats, m, fiber.label)


@dataclass(frozen=True)
class ProcessedDataset:
    """Collection of processed fibers, mirroring FiberDataset."""

    fibers: tuple[ProcessedFiber, ...]
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

    def __iter__(self) -> Iterator[ProcessedFiber]:
        return iter(self.fibers)


def process_dataset(dataset: FiberDataset) -> ProcessedDataset:
    base = dataset.provenance + " | " if dataset.provenance else ""
    return ProcessedDataset(
        tuple(prune_and_pad(f) for f in dataset.fibers),
        base + "preprocessed v1",
    )


_PROCESSED_HEADER = "#processed v1"


def save_processed(dataset: ProcessedDataset, path: Union[str, Path]) -> None:
    """Processed-file format: full 100-row point list plus a valid_len column."""
    lines = [_PROCESSED_HEADER]
    if dataset.provenance:
        lines.append("# provenance: " + " ".join(dataset.provenance.split()))
    for f in dataset.fibers:
        label = f.label.value if f.label is not None else "?"
        points = ";".join(f"{x!r},{y!r},{z!r}" for x, y, z in f.features.tolist())
        lines.append(f"{f.id}\t{label}\t{points}\t{f.valid_len}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def is_processed_file(path: Union[str, Path]) -> bool:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.readline().strip() == _PROCESSED_HEADER


def load_processed(path: Union[str, Path]) -> ProcessedDataset:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0].strip() != _PROCESSED_HEADER:
        raise DatasetError(f"{path}: missing {_PROCESSED_HEADER!r} header")
    fibers: list[ProcessedFiber] = []
    provenance = ""
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if body.startswith("provenance:"):
                provenance = body[len("provenance:"):].strip()
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise DatasetError(f"line {lineno}: expected 4 tab-separated fields")
        fid, label_name, points_text, valid_text = fields
        label = None if label_name == "?" else parse_label(label_name)
        try:
            valid_len = int(valid_text)
        except ValueError:
            raise DatasetError(f"line {lineno}: bad valid_len {valid_text!r}") from None
        rows = []
        for chunk in points_text.split(";"):
            parts = chunk.split(",")
            if len(parts) != 3:
                raise DatasetError(f"line {lineno}: point {chunk!r} is not a triple")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise DatasetError(f"line {lineno}: unparseable coordinate") from None
        feats = np.array(rows, dtype=np.float64)
        if feats.shape != (FEATURE_LEN, 3):
            raise DatasetError(
                f"line {lineno}: expected {FEATURE_LEN} points, got {feats.shape[0]}"
            )
        try:
            fibers.append(ProcessedFiber(fid, feats, valid_len, label))
        except ValueError as exc:
            raise DatasetError(f"line {lineno}: {exc}") from None
    return ProcessedDataset(tuple(fibers), provenance)


def stack_features(fibers: Sequence[ProcessedFiber]) -> np.ndarray:
    """Stack features into a (B, 100, 3) batch array."""
    return np.stack([f.features for f in fibers])
