"""Training loop and checkpoint persistence.

One iteration = one 11-pair batch: forward both branches, mean squared error
of the 11 scores against the 0/1 targets, exact backpropagation, one Adam
step.  Everything is keyed off the config seed, so a run is a pure function
of (config, dataset) and an interrupted run resumed from a checkpoint is
bitwise identical to the uninterrupted one.

Checkpoints are versioned JSON with every parameter and optimizer tensor
rendered as nested arrays of shortest round-trip decimals, so reload is
exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import CheckpointError, TrainingError
from .fibers import Level
from .nn import AdamState, adam_update, init_adam
from .pairing import BATCH_PAIRS, Batch, batch_for_iteration, class_pools
from .preprocess import ProcessedDataset, ProcessedFiber, stack_features
from .siamese import SiameseModel, TowerSizes, init_siamese, model_from_params, pair_loss_and_grads

CHECKPOINT_FORMAT = "fs2net-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    level: Level
    iterations: int = 1000
    batch_size: int = BATCH_PAIRS
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    sizes: TowerSizes = TowerSizes()
    data_path: str = ""
    checkpoint_path: str = ""

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")


def _fibers_of(ds: Union[ProcessedDataset, Sequence[ProcessedFiber]]) -> list[ProcessedFiber]:
    return list(ds.fibers) if isinstance(ds, ProcessedDataset) else list(ds)


def _batch_arrays(batch: Batch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    left = stack_features([p.left for p in batch.pairs])
    right = stack_features([p.right for p in batch.pairs])
    targets = np.array([p.target for p in batch.pairs], dtype=np.float64)
    return left, right, targets


def _run_iterations(
    model: SiameseModel,
    adam: AdamState,
    fibers: Sequence[ProcessedFiber],
    cfg: TrainConfig,
    start: int,
    stop: int,
    log: list[tuple[int, float]],
) -> AdamState:
    params = model.params()
    pools = class_pools(fibers, cfg.level)
    for it in range(start, stop):
        batch = batch_for_iteration(pools, cfg.level, cfg.seed, it, cfg.batch_size)
        left, right, targets = _batch_arrays(batch)
        loss, _, grads = pair_loss_and_grads(model, left, right, targets)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss {loss!r} at iteration {it}")
        new_params, adam = adam_update(params, grads, adam)
        for k, arr in params.items():
            arr[:] = new_params[k]
        log.append((it, loss))
    return adam


def train(
    cfg: TrainConfig, ds: Union[ProcessedDataset, Sequence[ProcessedFiber]]
) -> tuple[SiameseModel, list[tuple[int, float]]]:
    """Train a fresh model; returns it with the (iteration, loss) log."""
    model = init_siamese(cfg.level, cfg.sizes, cfg.seed)
    adam = init_adam(model.params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    log: list[tuple[int, float]] = []
    adam = _run_iterations(model, adam, _fibers_of(ds), cfg, 0, cfg.iterations, log)
    return model, log


@dataclass
class Checkpoint:
    """Everything needed to score pairs or to continue training exactly."""

    config: TrainConfig
    iteration: int
    model: SiameseModel
    adam: AdamState
    version: int = CHECKPOINT_VERSION


def train_checkpoint(
    cfg: TrainConfig,
    ds: Union[ProcessedDataset, Sequence[ProcessedFiber]],
    stop_at: Union[int, None] = None,
) -> tuple[Checkpoint, list[tuple[int, float]]]:
    """Train from scratch up to ``stop_at`` (default: cfg.iterations)."""
    stop = cfg.iterations if stop_at is None else stop_at
    if not (0 <= stop <= cfg.iterations):
        raise ValueError(f"stop_at {stop} outside [0, {cfg.iterations}]")
    model = init_siamese(cfg.level, cfg.sizes, cfg.seed)
    adam = init_adam(model.params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    log: list[tuple[int, float]] = []
    adam = _run_iterations(model, adam, _fibers_of(ds), cfg, 0, stop, log)
    return Checkpoint(cfg, stop, model, adam), log


def resume_training(
    ckpt: Checkpoint,
    ds: Union[ProcessedDataset, Sequence[ProcessedFiber]],
    stop_at: Union[int, None] = None,
) -> tuple[Checkpoint, list[tuple[int, float]]]:
    """Continue a checkpointed run; bitwise equal to never having stopped."""
    cfg = ckpt.config
    stop = cfg.iterations if stop_at is None else stop_at
    if stop < ckpt.iteration:
        raise ValueError(f"stop_at {stop} is before checkpoint iteration {ckpt.iteration}")
    log: list[tuple[int, float]] = []
    adam = _run_iterations(ckpt.model, ckpt.adam, _fibers_of(ds), cfg, ckpt.iteration, stop, log)
    return Checkpoint(cfg, stop, ckpt.model, adam), log


def write_training_log(log: Sequence[tuple[int, float]], path: Union[str, Path]) -> None:
    """TSV iteration<TAB>loss, loss in shortest round-trip decimal form."""
    lines = [f"{it}\t{loss!r}" for it, loss in log]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _config_to_json(cfg: TrainConfig) -> dict:
    return {
        "level": cfg.level.value,
        "iterations": cfg.iterations,
        "batch_size": cfg.batch_size,
        "nonstandard_batch_size": cfg.batch_size != BATCH_PAIRS,
        "lr": cfg.lr,
        "beta1": cfg.beta1,
        "beta2": cfg.beta2,
        "eps": cfg.eps,
        "seed": cfg.seed,
        "sizes": {
            "blstm_hidden": cfg.sizes.blstm_hidden,
            "lstm_hidden": cfg.sizes.lstm_hidden,
            "dense_hidden": cfg.sizes.dense_hidden,
            "embed_dim": cfg.sizes.embed_dim,
        },
        "data_path": cfg.data_path,
        "checkpoint_path": cfg.checkpoint_path,
    }


def _config_from_json(obj: dict) -> TrainConfig:
    sizes = obj["sizes"]
    return TrainConfig(
        level=Level(obj["level"]),
        iterations=int(obj["iterations"]),
        batch_size=int(obj["batch_size"]),
        lr=float(obj["lr"]),
        beta1=float(obj["beta1"]),
        beta2=float(obj["beta2"]),
        eps=float(obj["eps"]),
        seed=int(obj["seed"]),
        sizes=TowerSizes(
            blstm_hidden=int(sizes["blstm_hidden"]),
            lstm_hidden=int(sizes["lstm_hidden"]),
            dense_hidden=int(sizes["dense_hidden"]),
            embed_dim=int(sizes["embed_dim"]),
        ),
        data_path=str(obj.get("data_path", "")),
        checkpoint_path=str(obj.get("checkpoint_path", "")),
    )


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> None:
    obj = {
        "format": CHECKPOINT_FORMAT,
        "version": ckpt.version,
        "config": _config_to_json(ckpt.config),
        "iteration": ckpt.iteration,
        "rng": {
            "algorithm": "philox-seedsequence",
            "seed": ckpt.config.seed,
            "next_iteration": ckpt.iteration,
        },
        "model": {
            "level": ckpt.model.level.value,
            "version": ckpt.model.version,
            "input_size": ckpt.model.input_size,
            "params": {k: a.tolist() for k, a in ckpt.model.param_items()},
        },
        "adam": {
            "t": ckpt.adam.t,
            "lr": ckpt.adam.lr,
            "beta1": ckpt.adam.beta1,
            "beta2": ckpt.adam.beta2,
            "eps": ckpt.adam.eps,
            "m": {k: a.tolist() for k, a in ckpt.adam.m.items()},
            "v": {k: a.tolist() for k, a in ckpt.adam.v.items()},
        },
    }
    Path(path).write_text(json.dumps(obj, separators=(",", ":")), encoding="utf-8")


def _require(obj: dict, key: str, path: Union[str, Path]) -> object:
    if key not in obj:
        raise CheckpointError(f"{path}: checkpoint missing key {key!r}")
    return obj[key]


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(
            f"{path}: corrupt checkpoint: {exc.msg} at offset {exc.pos}"
        ) from None
    if not isinstance(obj, dict) or obj.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    version = _require(obj, "version", path)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})"
        )
    try:
        cfg = _config_from_json(_require(obj, "config", path))
        iteration = int(_require(obj, "iteration", path))
        model_obj = _require(obj, "model", path)
        raw_params = model_obj["params"]
        params = {k: np.array(v, dtype=np.float64) for k, v in raw_params.items()}
        model = model_from_params(
            Level(model_obj["level"]), params, version=int(model_obj["version"])
        )
        adam_obj = _require(obj, "adam", path)
        adam = AdamState(
            lr=float(adam_obj["lr"]),
            beta1=float(adam_obj["beta1"]),
            beta2=float(adam_obj["beta2"]),
            eps=float(adam_obj["eps"]),
            t=int(adam_obj["t"]),
            m={k: np.array(v, dtype=np.float64) for k, v in adam_obj["m"].items()},
            v={k: np.array(v, dtype=np.float64) for k, v in adam_obj["v"].items()},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint: {exc}") from None
    expected = {k for k, _ in model.param_items()}
    for group_name, group in (("adam.m", adam.m), ("adam.v", adam.v)):
        if set(group) != expected:
            raise CheckpointError(f"{path}: {group_name} keys do not match model parameters")
        for k, arr in group.items():
            if arr.shape != params[k].shape:
                raise CheckpointError(
                    f"{path}: {group_name}[{k!r}] shape {arr.shape} != {params[k].shape}"
                )
    return Checkpoint(cfg, iteration, model, adam, version=int(version))
