"""Recurrent and dense layer primitives with exact backpropagation.

Everything is float64 numpy.  Forward functions accept a single sequence
(T, d) or a batch (B, T, d); internally sequences run time-major so the
recurrence loop does one matmul per step while input projections and weight
gradients collapse into single large matmuls over all steps.

LSTM gate blocks are stored stacked along the first axis of one weight
matrix in the fixed order [forget, input, output, candidate]; the per-gate
matrices are exposed as zero-copy views.  Gradient accumulation order is
fixed everywhere, which is what makes training bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import expit as sigmoid

ACTIVATIONS = ("relu", "sigmoid", "identity")


def _apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return sigmoid(z)
    if name == "identity":
        return z
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class LstmCellParams:
    """One LSTM cell: W (4h, d) input weights, U (4h, h) recurrent weights,
    b (4h,) biases, gates stacked [forget, input, output, candidate]."""

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        h = self.hidden
        if self.W.shape[0] != 4 * h or self.U.shape != (4 * h, h) or self.b.shape != (4 * h,):
            raise ValueError(
                f"inconsistent LSTM shapes: W {self.W.shape}, U {self.U.shape}, b {self.b.shape}"
            )

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    @property
    def input_size(self) -> int:
        return self.W.shape[1]

    # Zero-copy per-gate views.
    @property
    def W_f(self) -> np.ndarray:
        return self.W[: self.hidden]

    @property
    def W_i(self) -> np.ndarray:
        return self.W[self.hidden : 2 * self.hidden]

    @property
    def W_o(self) -> np.ndarray:
        return self.W[2 * self.hidden : 3 * self.hidden]

    @property
    def W_g(self) -> np.ndarray:
        return self.W[3 * self.hidden :]

    @property
    def U_f(self) -> np.ndarray:
        return self.U[: self.hidden]

    @property
    def U_i(self) -> np.ndarray:
        return self.U[self.hidden : 2 * self.hidden]

    @property
    def U_o(self) -> np.ndarray:
        return self.U[2 * self.hidden : 3 * self.hidden]

    @property
    def U_g(self) -> np.ndarray:
        return self.U[3 * self.hidden :]

    @property
    def b_f(self) -> np.ndarray:
        return self.b[: self.hidden]

    @property
    def b_i(self) -> np.ndarray:
        return self.b[self.hidden : 2 * self.hidden]

    @property
    def b_o(self) -> np.ndarray:
        return self.b[2 * self.hidden : 3 * self.hidden]

    @property
    def b_g(self) -> np.ndarray:
        return self.b[3 * self.hidden :]


@dataclass
class BlstmLayerParams:
    """Bidirectional layer: two independent cells sharing the hidden size."""

    forward_cell: LstmCellParams
    backward_cell: LstmCellParams

    def __post_init__(self) -> None:
        if self.forward_cell.hidden != self.backward_cell.hidden:
            raise ValueError("BLSTM cells must share the hidden size")

    @property
    def hidden(self) -> int:
        return self.forward_cell.hidden


@dataclass
class DenseParams:
    """Affine layer W (out, in), b (out,) with a named activation."""

    W: np.ndarray
    b: np.ndarray
    activation: str = "identity"

    def __post_init__(self) -> None:
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError(f"inconsistent dense shapes: W {self.W.shape}, b {self.b.shape}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, (fan_out, fan_in))


def init_lstm_cell(input_size: int, hidden: int, rng: np.random.Generator) -> LstmCellParams:
    """Glorot-uniform per gate matrix; forget-gate bias 1.0, others 0."""
    W = np.vstack([_glorot(rng, hidden, input_size) for _ in range(4)])
    U = np.vstack([_glorot(rng, hidden, hidden) for _ in range(4)])
    b = np.zeros(4 * hidden)
    b[:hidden] = 1.0
    return LstmCellParams(W, U, b)


def init_blstm(input_size: int, hidden: int, rng: np.random.Generator) -> BlstmLayerParams:
    return BlstmLayerParams(
        init_lstm_cell(input_size, hidden, rng),
        init_lstm_cell(input_size, hidden, rng),
    )


def init_dense(
    input_size: int, output_size: int, activation: str, rng: np.random.Generator
) -> DenseParams:
    return DenseParams(_glorot(rng, output_size, input_size), np.zeros(output_size), activation)


# ---------------------------------------------------------------------------
# single-step / public forwards
# ---------------------------------------------------------------------------

def lstm_step(
    cell: LstmCellParams, x: np.ndarray, h: np.ndarray, c: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM step.  Accepts (d,) vectors or (..., d) batches.

    f, i, o = sigmoid of their gate pre-activations, g = tanh candidate;
    c' = f*c + i*g; h' = o*tanh(c').
    """
    x, h, c = np.asarray(x, float), np.asarray(h, float), np.asarray(c, float)
    hd = cell.hidden
    if x.shape[-1] != cell.input_size:
        raise ValueError(f"input width {x.shape[-1]} != cell input size {cell.input_size}")
    if h.shape[-1] != hd or c.shape[-1] != hd:
        raise ValueError(f"state width mismatch: h {h.shape}, c {c.shape}, hidden {hd}")
    a = x @ cell.W.T + h @ cell.U.T + cell.b
    f = sigmoid(a[..., :hd])
    i = sigmoid(a[..., hd : 2 * hd])
    o = sigmoid(a[..., 2 * hd : 3 * hd])
    g = np.tanh(a[..., 3 * hd :])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


def _as_time_major(xs: np.ndarray) -> tuple[np.ndarray, bool]:
    """(T, d) -> (T, 1, d) flagged single; (B, T, d) -> (T, B, d)."""
    xs = np.asarray(xs, float)
    if xs.ndim == 2:
        return xs[:, None, :], True
    if xs.ndim == 3:
        return np.ascontiguousarray(xs.transpose(1, 0, 2)), False
    raise ValueError(f"inputs must be (T, d) or (B, T, d), got shape {xs.shape}")


def _from_time_major(hs: np.ndarray, single: bool) -> np.ndarray:
    return hs[:, 0, :] if single else hs.transpose(1, 0, 2)


@dataclass
class LstmTrace:
    """Cached activations of one LSTM run, for backpropagation through time."""

    xs: np.ndarray       # (T, B, d)
    gates: np.ndarray    # (T, B, 4h) post-activation [f, i, o, g]
    cs: np.ndarray       # (T, B, h)
    tanh_cs: np.ndarray  # (T, B, h)
    hs: np.ndarray       # (T+1, B, h), hs[0] = 0


def _lstm_run(cell: LstmCellParams, xs: np.ndarray) -> tuple[np.ndarray, LstmTrace]:
    """Run the recurrence over time-major xs (T, B, d); h0 = c0 = 0."""
    T, B, _ = xs.shape
    hd = cell.hidden
    pre = xs @ cell.W.T + cell.b
    gates = np.empty((T, B, 4 * hd))
    cs = np.empty((T, B, hd))
    tanh_cs = np.empty((T, B, hd))
    hs = np.zeros((T + 1, B, hd))
    c = np.zeros((B, hd))
    for t in range(T):
        a = pre[t] + hs[t] @ cell.U.T
        fio = sigmoid(a[:, : 3 * hd])
        g = np.tanh(a[:, 3 * hd :])
        f = fio[:, :hd]
        i = fio[:, hd : 2 * hd]
        o = fio[:, 2 * hd : 3 * hd]
        c = f * c + i * g
        tc = np.tanh(c)
        hs[t + 1] = o * tc
        gates[t, :, : 3 * hd] = fio
        gates[t, :, 3 * hd :] = g
        cs[t] = c
        tanh_cs[t] = tc
    return hs[1:], LstmTrace(xs, gates, cs, tanh_cs, hs)


def _lstm_backward(
    cell: LstmCellParams, trace: LstmTrace, d_hs: np.ndarray
) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """BPTT.  d_hs (T, B, h) holds the loss gradient flowing into each h_t.

    Returns gradients with respect to the inputs plus (dW, dU, db).
    """
    T, B, hd = trace.cs.shape
    gates = trace.gates
    dA = np.empty((T, B, 4 * hd))
    dh = np.zeros((B, hd))
    dc = np.zeros((B, hd))
    zeros_c = np.zeros((B, hd))
    for t in range(T - 1, -1, -1):
        f = gates[t, :, :hd]
        i = gates[t, :, hd : 2 * hd]
        o = gates[t, :, 2 * hd : 3 * hd]
        g = gates[t, :, 3 * hd :]
        tc = trace.tanh_cs[t]
        dh = dh + d_hs[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        c_prev = trace.cs[t - 1] if t > 0 else zeros_c
        df = dc * c_prev
        di = dc * g
        dg = dc * i
        dA[t, :, :hd] = df * f * (1.0 - f)
        dA[t, :, hd : 2 * hd] = di * i * (1.0 - i)
        dA[t, :, 2 * hd : 3 * hd] = do * o * (1.0 - o)
        dA[t, :, 3 * hd :] = dg * (1.0 - g * g)
        dh = dA[t] @ cell.U
        dc = dc * f
    dW = np.tensordot(dA, trace.xs, axes=((0, 1), (0, 1)))
    dU = np.tensordot(dA, trace.hs[:-1], axes=((0, 1), (0, 1)))
    db = dA.sum(axis=(0, 1))
    d_xs = dA @ cell.W
    return d_xs, (dW, dU, db)


def lstm_forward(cell: LstmCellParams, inputs: np.ndarray) -> np.ndarray:
    """All hidden states of the left-to-right recurrence from zero state.

    inputs (T, d) -> (T, h); inputs (B, T, d) -> (B, T, h).
    """
    xs, single = _as_time_major(inputs)
    if xs.shape[0] == 0:
        raise ValueError("empty input sequence")
    if xs.shape[-1] != cell.input_size:
        raise ValueError(f"input width {xs.shape[-1]} != cell input size {cell.input_size}")
    hs, _ = _lstm_run(cell, xs)
    return _from_time_major(hs, single)


def _blstm_run(
    layer: BlstmLayerParams, xs: np.ndarray
) -> tuple[np.ndarray, tuple[LstmTrace, LstmTrace]]:
    hs_f, tr_f = _lstm_run(layer.forward_cell, xs)
    hs_b_rev, tr_b = _lstm_run(layer.backward_cell, np.ascontiguousarray(xs[::-1]))
    out = np.concatenate([hs_f, hs_b_rev[::-1]], axis=2)
    return out, (tr_f, tr_b)


def _blstm_backward(
    layer: BlstmLayerParams,
    traces: tuple[LstmTrace, LstmTrace],
    d_out: np.ndarray,
) -> tuple[np.ndarray, tuple, tuple]:
    hd = layer.hidden
    tr_f, tr_b = traces
    d_xs_f, grads_f = _lstm_backward(layer.forward_cell, tr_f, d_out[:, :, :hd])
    d_rev = np.ascontiguousarray(d_out[::-1, :, hd:])
    d_xs_b_rev, grads_b = _lstm_backward(layer.backward_cell, tr_b, d_rev)
    d_xs = d_xs_f + d_xs_b_rev[::-1]
    return d_xs, grads_f, grads_b


def blstm_forward(layer: BlstmLayerParams, inputs: np.ndarray) -> np.ndarray:
    """Concatenated [forward h_t, backward h_t] per step, aligned to input time.

    inputs (T, d) -> (T, 2h); (B, T, d) -> (B, T, 2h).
    """
    xs, single = _as_time_major(inputs)
    if xs.shape[0] == 0:
        raise ValueError("empty input sequence")
    out, _ = _blstm_run(layer, xs)
    return _from_time_major(out, single)


def _dense_run(p: DenseParams, x: np.ndarray) -> tuple[np.ndarray, tuple]:
    z = x @ p.W.T + p.b
    y = _apply_activation(p.activation, z)
    return y, (x, z, y)


def _dense_backward(
    p: DenseParams, trace: tuple, dy: np.ndarray
) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray]]:
    x, z, y = trace
    if p.activation == "relu":
        dz = dy * (z > 0.0)
    elif p.activation == "sigmoid":
        dz = dy * y * (1.0 - y)
    else:
        dz = dy
    out, inp = p.W.shape
    dz2 = dz.reshape(-1, out)
    x2 = x.reshape(-1, inp)
    dW = dz2.T @ x2
    db = dz2.sum(axis=0)
    dx = dz @ p.W
    return dx, (dW, db)


def dense_forward(p: DenseParams, x: np.ndarray) -> np.ndarray:
    """y = activation(W x + b); x may carry leading batch axes."""
    x = np.asarray(x, float)
    if x.shape[-1] != p.W.shape[1]:
        raise ValueError(f"input width {x.shape[-1]} != dense input size {p.W.shape[1]}")
    y, _ = _dense_run(p, x)
    return y


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over elements of the squared error."""
    pred = np.asarray(pred, float)
    target = np.asarray(target, float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape}, target {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Adam moments and step count; m and v mirror the parameter dict."""

    lr: float
    beta1: float
    beta2: float
    eps: float
    t: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


def init_adam(
    params: Mapping[str, np.ndarray],
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    return AdamState(
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        t=0,
        m={k: np.zeros_like(a) for k, a in params.items()},
        v={k: np.zeros_like(a) for k, a in params.items()},
    )


def adam_update(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam step; returns new parameters and state."""
    if set(params) != set(grads):
        raise ValueError("parameter and gradient keys differ")
    t_new = state.t + 1
    bc1 = 1.0 - state.beta1**t_new
    bc2 = 1.0 - state.beta2**t_new
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for k, theta in params.items():
        g = grads[k]
        if g.shape != theta.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {theta.shape} for {k!r}")
        m = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[k] + (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params[k] = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[k] = m
        new_v[k] = v
    return new_params, AdamState(state.lr, state.beta1, state.beta2, state.eps, t_new, new_m, new_v)


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def finite_diff_check(
    loss_fn: Callable[[], float],
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    eps: float = 1e-5,
) -> float:
    """Max relative error between analytic gradients and central differences.

    Perturbs every entry of every array in place by +/- eps and restores it.
    Relative error per entry is |a - n| / max(1e-8, |a| + |n|).  Callers must
    evaluate at a point away from ReLU / L1 kinks (the analytic subgradient
    convention at 0 is 0, which central differences do not reproduce).
    """
    if len(params) != len(grads):
        raise ValueError("params and grads length mismatch")
    worst = 0.0
    for arr, g in zip(params, grads):
        if arr.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {arr.shape}")
        for ix in np.ndindex(arr.shape):
            orig = arr[ix]
            arr[ix] = orig + eps
            loss_plus = loss_fn()
            arr[ix] = orig - eps
            loss_minus = loss_fn()
            arr[ix] = orig
            numeric = (loss_plus - loss_minus) / (2.0 * eps)
            analytic = float(g[ix])
            rel = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
            if rel > worst:
                worst = rel
    return worst
