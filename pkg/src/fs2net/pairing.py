"""Class-structured fiber-pair batches.

A batch holds 11 pairs built around one anchor class: at the fine level,
4 similar pairs (both fibers from the anchor tract) and 7 dissimilar pairs,
one against each of the other 7 tracts; at the coarse level, 5 similar and
6 dissimilar against the single other class.  Anchors cycle round-robin so
every class gets equal exposure regardless of how skewed the corpus is.
Pair targets are 1 for same-class, 0 otherwise.

Fine-level batches are drawn from the eight white tracts only; Grey takes
part in coarse batches.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence, Union

import numpy as np

from .errors import PairingError
from .fibers import AnyLabel, Level, label_at_level, level_classes
from .preprocess import ProcessedFiber
from .rng import DOMAIN_PAIRING, stream

#: Canonical batch size and its similar/dissimilar split per level.
BATCH_PAIRS = 11
SIMILAR_PER_BATCH = {Level.FINE: 4, Level.COARSE: 5}


@dataclass(frozen=True)
class FiberPair:
    left: ProcessedFiber
    right: ProcessedFiber
    target: int


@dataclass(frozen=True)
class Batch:
    pairs: tuple[FiberPair, ...]
    anchor: AnyLabel
    level: Level


Pools = Mapping[AnyLabel, Sequence[ProcessedFiber]]
FibersOrPools = Union[Sequence[ProcessedFiber], Pools]


def class_pools(fibers: FibersOrPools, level: Level) -> Pools:
    """Group labeled fibers by their class at ``level``; unlabeled are skipped.

    At the fine level Grey fibers are excluded: fine classification is the
    8-way discrimination of white tracts.  A precomputed pools mapping passes
    through unchanged, so hot loops can group once.
    """
    if isinstance(fibers, Mapping):
        return fibers
    pools: dict[AnyLabel, list[ProcessedFiber]] = {c: [] for c in level_classes(level)}
    for f in fibers:
        if f.label is None:
            continue
        cls = label_at_level(f.label, level)
        if cls in pools:
            pools[cls].append(f)
    return pools


def _draw(
    pool: Sequence[ProcessedFiber], count: int, rng: np.random.Generator
) -> list[ProcessedFiber]:
    """Without replacement when the pool allows, otherwise with replacement."""
    if len(pool) >= count:
        idx = rng.permutation(len(pool))[:count]
    else:
        idx = rng.integers(0, len(pool), count)
    return [pool[i] for i in idx]


def similar_dissimilar_counts(level: Level, n_pairs: int = BATCH_PAIRS) -> tuple[int, int]:
    """Similar/dissimilar split; 4:7 (fine) and 5:6 (coarse) at the canonical
    size of 11, scaled proportionally for nonstandard sizes."""
    if n_pairs < 2:
        raise ValueError(f"a batch needs at least 2 pairs, got {n_pairs}")
    n_sim = int(round(n_pairs * SIMILAR_PER_BATCH[level] / BATCH_PAIRS))
    n_sim = min(max(n_sim, 1), n_pairs - 1)
    return n_sim, n_pairs - n_sim


def make_batch(
    fibers: FibersOrPools,
    level: Level,
    anchor: AnyLabel,
    rng: np.random.Generator,
    n_pairs: int = BATCH_PAIRS,
) -> Batch:
    """One batch around ``anchor``; deterministic given the generator state.

    Dissimilar pairs put the anchor-class fiber on the left and cycle their
    right-hand classes through the other classes in enumeration order, which
    at the canonical sizes covers each exactly once (fine) or repeats the
    single other class (coarse).
    """
    classes = level_classes(level)
    if anchor not in classes:
        raise ValueError(f"anchor {anchor} is not a {level.value}-level class")
    pools = class_pools(fibers, level)
    n_sim, n_dis = similar_dissimilar_counts(level, n_pairs)
    others = [c for c in classes if c != anchor]
    right_classes = [others[j % len(others)] for j in range(n_dis)]

    if len(pools[anchor]) < 2:
        raise PairingError(
            f"class {anchor.value} has {len(pools[anchor])} fibers; need at least 2"
        )
    for cls in others:
        if right_classes.count(cls) > 0 and not pools[cls]:
            raise PairingError(f"class {cls.value} has no fibers")

    anchor_draws = _draw(pools[anchor], 2 * n_sim + n_dis, rng)
    # Per-class right-hand draws happen in first-appearance order.
    per_class_needs: dict[AnyLabel, int] = {}
    for cls in right_classes:
        per_class_needs[cls] = per_class_needs.get(cls, 0) + 1
    per_class_draws = {
        cls: iter(_draw(pools[cls], need, rng)) for cls, need in per_class_needs.items()
    }

    pairs: list[FiberPair] = []
    for j in range(n_sim):
        pairs.append(FiberPair(anchor_draws[2 * j], anchor_draws[2 * j + 1], 1))
    for j, cls in enumerate(right_classes):
        pairs.append(FiberPair(anchor_draws[2 * n_sim + j], next(per_class_draws[cls]), 0))
    return Batch(tuple(pairs), anchor, level)


def batch_for_iteration(
    fibers: FibersOrPools,
    level: Level,
    seed: int,
    iteration: int,
    n_pairs: int = BATCH_PAIRS,
) -> Batch:
    """The batch of a given training iteration.

    Anchor classes rotate round-robin over the level's classes, and the draw
    stream is keyed by (seed, iteration), so any iteration's batch can be
    reconstructed independently — this is what makes checkpoint resume exact.
    """
    classes = level_classes(level)
    anchor = classes[iteration % len(classes)]
    rng = stream(seed, DOMAIN_PAIRING, iteration)
    return make_batch(fibers, level, anchor, rng, n_pairs)


def batch_stream(
    fibers: FibersOrPools,
    level: Level,
    seed: int,
    n_pairs: int = BATCH_PAIRS,
) -> Iterator[Batch]:
    """Infinite deterministic sequence of training batches."""
    pools = class_pools(fibers, level)
    iteration = 0
    while True:
        yield batch_for_iteration(pools, level, seed, iteration, n_pairs)
        iteration += 1
