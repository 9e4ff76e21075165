"""Metrics and experiment protocols.

Accuracy is the fraction of correctly classified fibers; recall is the
fraction of truly white fibers whose prediction maps to White — the number
that exposes how a classifier copes with the heavy Grey skew.  Both are
reported as percentages with two decimals.

Protocols:
  intra   one dataset split into train/test parts
  inter   train on the first file, test on each remaining file
  merged  a fixed-size quota drawn from every file forms the training pool;
          the remainders form the test set

Each protocol run is preprocess -> train -> build default set -> classify ->
metrics, with optional rotation of the raw test fibers (the unregistered
scenario) and optional rotation augmentation of the default set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .classify import PredictionRow, build_default_set, classify_all, save_predictions
from .errors import MetricsError
from .fibers import (
    FiberDataset,
    FineLabel,
    Level,
    CoarseLabel,
    level_classes,
    load_dataset,
    parse_label,
    parse_rotation_tag,
    rotate_dataset,
    to_coarse,
)
from .preprocess import process_dataset
from .rng import DOMAIN_PROTOCOL, stream
from .training import Checkpoint, TrainConfig, save_checkpoint, train_checkpoint, write_training_log
from .fibers import split_dataset

PROTOCOLS = ("intra", "inter", "merged")


@dataclass(frozen=True)
class EvalReport:
    protocol: str
    level: Level
    accuracy: float  # percent
    recall: float  # percent; nan when the table has no white fibers
    confusion: np.ndarray  # rows = truth, cols = predicted
    class_names: tuple[str, ...]
    rotation: Optional[str] = None
    counts: dict = field(default_factory=dict)


def _is_white(name: str, level: Level) -> bool:
    label = parse_label(name, level)
    coarse = label if level is Level.COARSE else to_coarse(label)
    return coarse is CoarseLabel.WHITE


def compute_metrics(
    rows: Sequence[PredictionRow],
    level: Level,
    protocol: str = "",
    rotation: Optional[str] = None,
) -> EvalReport:
    """Accuracy, white recall, and the level-appropriate confusion matrix."""
    if not rows:
        raise MetricsError("empty prediction table")
    classes = level_classes(level)
    names = tuple(c.value for c in classes)
    index = {n: i for i, n in enumerate(names)}
    confusion = np.zeros((len(names), len(names)), dtype=np.int64)
    correct = 0
    white_total = 0
    white_predicted = 0
    for r in rows:
        if r.truth == "?":
            raise MetricsError(f"fiber {r.id!r} has no truth label")
        if r.truth not in index:
            raise MetricsError(f"fiber {r.id!r}: truth {r.truth!r} is not a {level.value} class")
        if r.pred not in index:
            raise MetricsError(f"fiber {r.id!r}: prediction {r.pred!r} is not a {level.value} class")
        ti, pi = index[r.truth], index[r.pred]
        confusion[ti, pi] += 1
        if ti == pi:
            correct += 1
        if _is_white(r.truth, level):
            white_total += 1
            if _is_white(r.pred, level):
                white_predicted += 1
    total = len(rows)
    accuracy = 100.0 * correct / total
    recall = 100.0 * white_predicted / white_total if white_total else float("nan")
    return EvalReport(
        protocol=protocol,
        level=level,
        accuracy=accuracy,
        recall=recall,
        confusion=confusion,
        class_names=names,
        rotation=rotation,
        counts={
            "total": total,
            "correct": correct,
            "white_total": white_total,
            "white_predicted": white_predicted,
        },
    )


def format_percent(x: float) -> str:
    return f"{x:.2f}"


def render_report_text(report: EvalReport) -> str:
    lines = [
        f"protocol: {report.protocol}",
        f"level:    {report.level.value}",
    ]
    if report.rotation is not None:
        lines.append(f"rotation: {report.rotation}")
    lines += [
        f"fibers:   {report.counts.get('total', 0)}",
        f"accuracy: {format_percent(report.accuracy)}",
        f"recall:   {format_percent(report.recall)}",
        "confusion (rows = truth, cols = predicted):",
    ]
    width = max(len(n) for n in report.class_names)
    cell = max(width, 6)
    header = " " * (width + 2) + " ".join(f"{n:>{cell}}" for n in report.class_names)
    lines.append(header)
    for i, name in enumerate(report.class_names):
        row = " ".join(f"{int(v):>{cell}}" for v in report.confusion[i])
        lines.append(f"{name:<{width}}  " + row)
    return "\n".join(lines) + "\n"


def render_report_kv(report: EvalReport) -> str:
    lines = [
        f"protocol={report.protocol}",
        f"level={report.level.value}",
        f"rotation={report.rotation if report.rotation is not None else ''}",
        f"accuracy={format_percent(report.accuracy)}",
        f"recall={format_percent(report.recall)}",
    ]
    for key in ("total", "correct", "white_total", "white_predicted"):
        lines.append(f"{key}={report.counts.get(key, 0)}")
    for i, name in enumerate(report.class_names):
        lines.append(f"class.{i}={name}")
    for i in range(report.confusion.shape[0]):
        for j in range(report.confusion.shape[1]):
            lines.append(f"confusion.{i}.{j}={int(report.confusion[i, j])}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ProtocolConfig:
    protocol: str
    level: Level
    train: TrainConfig
    data: tuple[str, ...]
    fraction: float = 0.8
    per_class: int = 5
    default_rotations: tuple[str, ...] = ()
    rotate_test: Optional[str] = None
    merged_quota: Optional[int] = None
    threads: int = 1

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if not self.data:
            raise ValueError("at least one data file is required")


def _merged_split(
    datasets: Sequence[tuple[str, FiberDataset]], quota: int, seed: int
) -> tuple[FiberDataset, FiberDataset]:
    train_fibers = []
    test_fibers = []
    for file_ix, (name, ds) in enumerate(datasets):
        if quota > len(ds):
            raise ValueError(
                f"merged quota {quota} exceeds size {len(ds)} of {name}"
            )
        rng = stream(seed, DOMAIN_PROTOCOL, file_ix)
        chosen = set(rng.permutation(len(ds))[:quota].tolist())
        for i, f in enumerate(ds.fibers):
            (train_fibers if i in chosen else test_fibers).append(f)
    return (
        FiberDataset(tuple(train_fibers), f"merged train quota={quota} seed={seed}"),
        FiberDataset(tuple(test_fibers), f"merged test quota={quota} seed={seed}"),
    )


def _keep_for_level(ds: FiberDataset, level: Level) -> FiberDataset:
    """Test fibers usable at this level: labeled, and white-only for fine."""
    if level is Level.FINE:
        keep = tuple(f for f in ds.fibers if f.label is not None and f.label is not FineLabel.GREY)
    else:
        keep = tuple(f for f in ds.fibers if f.label is not None)
    return FiberDataset(keep, ds.provenance)


def run_protocol(
    pcfg: ProtocolConfig, out_dir: Union[str, Path, None] = None
) -> list[EvalReport]:
    """Execute one protocol end to end; optionally write all artifacts."""
    named = [(Path(p).stem, load_dataset(p)) for p in pcfg.data]
    seed = pcfg.train.seed
    if pcfg.protocol == "intra":
        if len(named) != 1:
            raise ValueError("intra protocol takes exactly one data file")
        train_raw, test_raw = split_dataset(named[0][1], pcfg.fraction, seed)
        tests = [("test", test_raw)]
    elif pcfg.protocol == "inter":
        if len(named) < 2:
            raise ValueError("inter protocol needs a train file plus at least one test file")
        train_raw = named[0][1]
        tests = [(name, ds) for name, ds in named[1:]]
    else:
        if pcfg.merged_quota is None:
            raise ValueError("merged protocol requires merged_quota")
        train_raw, merged_test = _merged_split(named, pcfg.merged_quota, seed)
        tests = [("held-out", merged_test)]

    ckpt, log = train_checkpoint(pcfg.train, process_dataset(train_raw))
    rotations = tuple(parse_rotation_tag(t) for t in pcfg.default_rotations)
    defaults = build_default_set(
        train_raw, pcfg.level, per_class=pcfg.per_class, rotations=rotations, seed=seed
    )

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(ckpt, out / "model.ckpt")
        write_training_log(log, out / "training-log.tsv")

    reports = []
    for name, raw in tests:
        usable = _keep_for_level(raw, pcfg.level)
        if pcfg.rotate_test is not None:
            usable = rotate_dataset(usable, parse_rotation_tag(pcfg.rotate_test))
        processed = process_dataset(usable)
        rows = classify_all(ckpt.model, defaults, processed.fibers, threads=pcfg.threads)
        report = compute_metrics(rows, pcfg.level, protocol=pcfg.protocol, rotation=pcfg.rotate_test)
        reports.append(report)
        if out is not None:
            save_predictions(rows, out / f"predictions-{name}.tsv")
            (out / f"report-{name}.txt").write_text(render_report_text(report), encoding="utf-8")
            (out / f"report-{name}.kv").write_text(render_report_kv(report), encoding="utf-8")
    return reports
