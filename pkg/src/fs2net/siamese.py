"""Twin-tower fiber comparator.

One shared-parameter tower (BLSTM -> LSTM -> two ReLU dense layers) maps a
100x3 fiber feature matrix to a 32-dim embedding; a pair is scored by the
elementwise absolute difference of the two embeddings fed through a single
sigmoid node.  Scores close to 1 mean "same class".  The tower consumes all
timesteps including zero padding, and the sequence summary is the last LSTM
hidden state.

The two branch applications literally reuse one parameter set, so the
score is exactly symmetric and the self-score sigmoid(head bias) is a
model constant.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from . import nn
from .fibers import Level
from .preprocess import ProcessedFiber
from .rng import DOMAIN_INIT, stream

#: Fixed chunk width for batched embedding; keeps matmul reduction order
#: identical no matter how many fibers or threads are in play.
EMBED_CHUNK = 64


@dataclass(frozen=True)
class TowerSizes:
    """Layer widths; defaults are the production configuration."""

    blstm_hidden: int = 32
    lstm_hidden: int = 64
    dense_hidden: int = 64
    embed_dim: int = 32

    def __post_init__(self) -> None:
        for name, v in vars(self).items():
            if v < 1:
                raise ValueError(f"{name} must be >= 1, got {v}")


@dataclass
class SiameseModel:
    """All parameters of the shared tower plus the similarity head."""

    blstm: nn.BlstmLayerParams
    lstm: nn.LstmCellParams
    dense1: nn.DenseParams
    dense2: nn.DenseParams
    head: nn.DenseParams
    level: Level
    version: int = 1

    def param_items(self) -> list[tuple[str, np.ndarray]]:
        """Live parameter arrays in the fixed canonical order."""
        return [
            ("blstm.forward.W", self.blstm.forward_cell.W),
            ("blstm.forward.U", self.blstm.forward_cell.U),
            ("blstm.forward.b", self.blstm.forward_cell.b),
            ("blstm.backward.W", self.blstm.backward_cell.W),
            ("blstm.backward.U", self.blstm.backward_cell.U),
            ("blstm.backward.b", self.blstm.backward_cell.b),
            ("lstm.W", self.lstm.W),
            ("lstm.U", self.lstm.U),
            ("lstm.b", self.lstm.b),
            ("dense1.W", self.dense1.W),
            ("dense1.b", self.dense1.b),
            ("dense2.W", self.dense2.W),
            ("dense2.b", self.dense2.b),
            ("head.W", self.head.W),
            ("head.b", self.head.b),
        ]

    def params(self) -> dict[str, np.ndarray]:
        return dict(self.param_items())

    @property
    def sizes(self) -> TowerSizes:
        return TowerSizes(
            blstm_hidden=self.blstm.hidden,
            lstm_hidden=self.lstm.hidden,
            dense_hidden=self.dense1.W.shape[0],
            embed_dim=self.dense2.W.shape[0],
        )

    @property
    def input_size(self) -> int:
        return self.blstm.forward_cell.input_size


def model_from_params(
    level: Level, params: Mapping[str, np.ndarray], version: int = 1
) -> SiameseModel:
    """Assemble a model from a canonical-name parameter mapping (arrays are
    copied); shape consistency is validated by the layer constructors."""

    def arr(name: str) -> np.ndarray:
        try:
            return np.array(params[name], dtype=np.float64)
        except KeyError:
            raise ValueError(f"missing parameter {name!r}") from None

    blstm = nn.BlstmLayerParams(
        nn.LstmCellParams(arr("blstm.forward.W"), arr("blstm.forward.U"), arr("blstm.forward.b")),
        nn.LstmCellParams(
            arr("blstm.backward.W"), arr("blstm.backward.U"), arr("blstm.backward.b")
        ),
    )
    lstm = nn.LstmCellParams(arr("lstm.W"), arr("lstm.U"), arr("lstm.b"))
    dense1 = nn.DenseParams(arr("dense1.W"), arr("dense1.b"), "relu")
    dense2 = nn.DenseParams(arr("dense2.W"), arr("dense2.b"), "relu")
    head = nn.DenseParams(arr("head.W"), arr("head.b"), "sigmoid")
    return SiameseModel(blstm, lstm, dense1, dense2, head, level, version)


def init_siamese(
    level: Level,
    sizes: TowerSizes = TowerSizes(),
    seed: int = 0,
    input_size: int = 3,
) -> SiameseModel:
    """Seeded Glorot initialization; draw order is fixed by construction."""
    rng = stream(seed, DOMAIN_INIT)
    blstm = nn.init_blstm(input_size, sizes.blstm_hidden, rng)
    lstm = nn.init_lstm_cell(2 * sizes.blstm_hidden, sizes.lstm_hidden, rng)
    dense1 = nn.init_dense(sizes.lstm_hidden, sizes.dense_hidden, "relu", rng)
    dense2 = nn.init_dense(sizes.dense_hidden, sizes.embed_dim, "relu", rng)
    head = nn.init_dense(sizes.embed_dim, 1, "sigmoid", rng)
    return SiameseModel(blstm, lstm, dense1, dense2, head, level)


Features = Union[ProcessedFiber, np.ndarray]


def _features_of(f: Features) -> np.ndarray:
    return f.features if isinstance(f, ProcessedFiber) else np.asarray(f, float)


def _tower_run(model: SiameseModel, feats: np.ndarray) -> tuple[np.ndarray, tuple]:
    """feats (B, T, d) -> embeddings (B, E) plus the backward trace."""
    xs = np.ascontiguousarray(feats.transpose(1, 0, 2))
    blstm_out, tr_bl = nn._blstm_run(model.blstm, xs)
    hs, tr_l = nn._lstm_run(model.lstm, blstm_out)
    h_last = hs[-1]
    d1, tr_d1 = nn._dense_run(model.dense1, h_last)
    emb, tr_d2 = nn._dense_run(model.dense2, d1)
    return emb, (tr_bl, tr_l, tr_d1, tr_d2)


def _tower_backward(
    model: SiameseModel, trace: tuple, d_emb: np.ndarray, grads: dict[str, np.ndarray]
) -> None:
    """Accumulate parameter gradients of one branch into ``grads``."""
    tr_bl, tr_l, tr_d1, tr_d2 = trace
    d_d1, (dW2, db2) = nn._dense_backward(model.dense2, tr_d2, d_emb)
    d_hlast, (dW1, db1) = nn._dense_backward(model.dense1, tr_d1, d_d1)
    T, B, hd = tr_l.cs.shape
    d_hs = np.zeros((T, B, hd))
    d_hs[T - 1] = d_hlast
    d_blstm_out, (dWl, dUl, dbl) = nn._lstm_backward(model.lstm, tr_l, d_hs)
    _, grads_f, grads_b = nn._blstm_backward(model.blstm, tr_bl, d_blstm_out)
    for key, val in (
        ("blstm.forward.W", grads_f[0]),
        ("blstm.forward.U", grads_f[1]),
        ("blstm.forward.b", grads_f[2]),
        ("blstm.backward.W", grads_b[0]),
        ("blstm.backward.U", grads_b[1]),
        ("blstm.backward.b", grads_b[2]),
        ("lstm.W", dWl),
        ("lstm.U", dUl),
        ("lstm.b", dbl),
        ("dense1.W", dW1),
        ("dense1.b", db1),
        ("dense2.W", dW2),
        ("dense2.b", db2),
    ):
        grads[key] += val


def embed(model: SiameseModel, fiber: Features) -> np.ndarray:
    """Embedding of one fiber: all timesteps (padding included) through
    BLSTM then LSTM, last hidden state through the dense stack."""
    feats = _features_of(fiber)
    if feats.ndim != 2 or feats.shape[1] != model.input_size:
        raise ValueError(f"features must be (T, {model.input_size}), got {feats.shape}")
    emb, _ = _tower_run(model, feats[None])
    return emb[0]


def _embed_chunks(model: SiameseModel, feats: np.ndarray, out: np.ndarray, lo: int, hi: int) -> None:
    for start in range(lo, hi, EMBED_CHUNK):
        stop = min(start + EMBED_CHUNK, hi)
        out[start:stop], _ = _tower_run(model, feats[start:stop])


def embed_batch(model: SiameseModel, feats: np.ndarray, threads: int = 1) -> np.ndarray:
    """Embeddings for a (B, T, d) stack, computed in fixed 64-wide chunks.

    Chunk boundaries do not depend on ``threads``, and each chunk writes a
    disjoint output slice, so results are schedule-independent.
    """
    feats = np.asarray(feats, float)
    if feats.ndim != 3:
        raise ValueError(f"expected (B, T, d) features, got shape {feats.shape}")
    B = feats.shape[0]
    out = np.empty((B, model.dense2.W.shape[0]))
    if B == 0:
        return out
    if threads <= 1:
        _embed_chunks(model, feats, out, 0, B)
        return out
    n_chunks = (B + EMBED_CHUNK - 1) // EMBED_CHUNK
    workers = min(threads, n_chunks)
    bounds = [
        (w * EMBED_CHUNK, min(B, (w + 1) * EMBED_CHUNK))
        for w in range(n_chunks)
    ]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(lambda se: _embed_chunks(model, feats, out, se[0], se[1]), bounds))
    return out


def scores_from_embeddings(
    model: SiameseModel, emb_a: np.ndarray, emb_b: np.ndarray
) -> np.ndarray:
    """sigmoid(w . |emb_a - emb_b| + bias); broadcasts over leading axes."""
    d = np.abs(emb_a - emb_b)
    return nn.dense_forward(model.head, d)[..., 0]


def score_pair(model: SiameseModel, a: Features, b: Features) -> float:
    """Similarity in (0, 1); exactly symmetric in its two arguments."""
    return float(scores_from_embeddings(model, embed(model, a), embed(model, b)))


def pair_loss(
    model: SiameseModel, left: np.ndarray, right: np.ndarray, targets: np.ndarray
) -> float:
    """Mean squared error of pair scores against 0/1 targets (forward only)."""
    B = left.shape[0]
    emb, _ = _tower_run(model, np.concatenate([left, right], axis=0))
    preds = scores_from_embeddings(model, emb[:B], emb[B:])
    return nn.mse_loss(preds, targets)


def zero_grads(model: SiameseModel) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(a) for k, a in model.param_items()}


def pair_loss_and_grads(
    model: SiameseModel, left: np.ndarray, right: np.ndarray, targets: np.ndarray
) -> tuple[float, np.ndarray, dict[str, np.ndarray]]:
    """Loss, per-pair scores, and exact gradients for a batch of pairs.

    left/right are (B, T, d) feature stacks, targets (B,) in {0, 1}.  The L1
    subgradient at 0 is taken as 0.  Gradient accumulation order (left
    branch, right branch, head) is fixed for bitwise reproducibility.
    """
    targets = np.asarray(targets, float)
    B = left.shape[0]
    # Both branches share parameters, so they run (and backpropagate) as one
    # stacked batch; the stacked BPTT also fuses the shared-weight gradient
    # accumulation of the two branches.
    emb, trace = _tower_run(model, np.concatenate([left, right], axis=0))
    diff = emb[:B] - emb[B:]
    pred_col, tr_h = nn._dense_run(model.head, np.abs(diff))
    preds = pred_col[:, 0]
    loss = nn.mse_loss(preds, targets)
    d_pred = (2.0 / preds.size) * (preds - targets)
    d_dist, (dW_h, db_h) = nn._dense_backward(model.head, tr_h, d_pred[:, None])
    d_diff = d_dist * np.sign(diff)
    grads = zero_grads(model)
    _tower_backward(model, trace, np.concatenate([d_diff, -d_diff], axis=0), grads)
    grads["head.W"] += dW_h
    grads["head.b"] += db_h
    return loss, preds, grads


def gradient_check(
    model: SiameseModel,
    left: np.ndarray,
    right: np.ndarray,
    targets: np.ndarray,
    eps: float = 1e-5,
) -> float:
    """Finite-difference check of pair_loss_and_grads over every parameter."""
    _, _, grads = pair_loss_and_grads(model, left, right, targets)
    names = [k for k, _ in model.param_items()]
    arrays = [a for _, a in model.param_items()]
    return nn.finite_diff_check(
        lambda: pair_loss(model, left, right, targets),
        arrays,
        [grads[k] for k in names],
        eps,
    )


def kink_margin(model: SiameseModel, left: np.ndarray, right: np.ndarray) -> float:
    """Distance of the evaluation point to the nearest ReLU / L1 kink.

    Finite-difference checks are only meaningful when parameter nudges cannot
    flip an activation across a kink; callers screen evaluation points with
    this margin.  ReLU margin is the smallest |pre-activation| anywhere in the
    dense stack of either branch.  Exactly-zero L1 differences come from units
    dead in both branches and stay zero under small nudges (the ReLU margin
    guards them), so the L1 margin only considers nonzero entries.
    """
    margin = np.inf
    embs = []
    for feats in (left, right):
        emb, (tr_bl, tr_l, tr_d1, tr_d2) = _tower_run(model, feats)
        margin = min(margin, float(np.min(np.abs(tr_d1[1]))), float(np.min(np.abs(tr_d2[1]))))
        embs.append(emb)
    diff = np.abs(embs[0] - embs[1])
    nonzero = diff[diff != 0.0]
    if nonzero.size:
        margin = min(margin, float(nonzero.min()))
    return margin
