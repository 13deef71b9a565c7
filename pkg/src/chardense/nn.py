"""Small dense-network substrate with hand-written backward passes.

Everything here works on numpy arrays. Forward functions return an output and
a cache; the matching ``*_backward`` consumes the upstream gradient and the
cache. Parameters live in a :class:`ParameterStore` so the optimizer and the
checkpoint writer can see them by name.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("identity", "relu", "tanh")


@dataclass
class Param:
    value: np.ndarray
    grad: np.ndarray
    trainable: bool = True


class ParameterStore:
    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Param] = {}

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> np.ndarray:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        value = np.ascontiguousarray(value, dtype=self.dtype)
        self.params[name] = Param(value, np.zeros_like(value), trainable)
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name].value

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def grad(self, name: str) -> np.ndarray:
        return self.params[name].grad

    def accumulate(self, name: str, g: np.ndarray):
        self.params[name].grad += g

    def zero_grad(self):
        for p in self.params.values():
            p.grad.fill(0)

    def set_trainable(self, name: str, flag: bool):
        self.params[name].trainable = flag

    def items(self):
        return self.params.items()

    def norms(self) -> dict[str, float]:
        return {n: float(np.linalg.norm(p.value)) for n, p in self.params.items()}


def glorot_uniform(rng, fan_in, fan_out, dtype=np.float64):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


def orthogonal(rng, rows, cols, dtype=np.float64):
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return q[:rows, :cols].astype(dtype)


def _check_inner(x, W):
    if x.shape[-1] != W.shape[0]:
        raise ValueError(f"shape mismatch: input {x.shape} vs weight {W.shape}")


# -- dense ------------------------------------------------------------------

def dense(x, W, b, activation="identity"):
    _check_inner(x, W)
    if b.shape != (W.shape[1],):
        raise ValueError(f"shape mismatch: weight {W.shape} vs bias {b.shape}")
    z = x @ W + b
    if activation == "identity":
        y = z
    elif activation == "relu":
        y = np.maximum(z, 0)
    elif activation == "tanh":
        y = np.tanh(z)
    else:
        raise ValueError(f"unknown activation {activation!r}")
    return y, (x, W, z, y, activation)


def dense_backward(dy, cache):
    """Return (dx, dW, db); leading dimensions of x are flattened for dW."""
    x, W, z, y, activation = cache
    if activation == "relu":
        dz = dy * (z > 0)
    elif activation == "tanh":
        dz = dy * (1 - y * y)
    else:
        dz = dy
    dx = dz @ W.T
    x2 = x.reshape(-1, x.shape[-1])
    dz2 = dz.reshape(-1, dz.shape[-1])
    return dx, x2.T @ dz2, dz2.sum(axis=0)


# -- dropout ----------------------------------------------------------------

def _check_keep(keep_p):
    if not 0 < keep_p <= 1:
        raise ValueError(f"keep probability must be in (0, 1], got {keep_p}")


def dropout_mask(shape, keep_p, rng, dtype=np.float64):
    """Inverted-dropout mask: 0 with prob 1-keep_p, else 1/keep_p."""
    _check_keep(keep_p)
    if keep_p == 1:
        return np.ones(shape, dtype=dtype)
    return ((rng.random(shape) < keep_p) / keep_p).astype(dtype)


def inverted_dropout(x, keep_p, rng=None, training=True):
    _check_keep(keep_p)
    if not training or keep_p == 1:
        return x
    return x * dropout_mask(x.shape, keep_p, rng, x.dtype)


def variational_mask(shape, keep_p, rng, dtype=np.float64):
    """One recurrent mask per sequence; the caller reuses it at every time step."""
    return dropout_mask(shape, keep_p, rng, dtype)


# -- LSTM -------------------------------------------------------------------

def _sigmoid(z):
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


def init_lstm(rng, input_dim, hidden, dtype=np.float64):
    """Glorot input weights, orthogonal recurrent blocks, forget bias 1.

    Gate order along the last axis is input, forget, output, candidate.
    """
    Wx = glorot_uniform(rng, input_dim, 4 * hidden, dtype)
    Wh = np.concatenate([orthogonal(rng, hidden, hidden, dtype) for _ in range(4)], axis=1)
    b = np.zeros(4 * hidden, dtype=dtype)
    b[hidden:2 * hidden] = 1.0
    return {"Wx": Wx, "Wh": Wh, "b": b}


def _lstm_cell(zx, h_prev, c_prev, Wh, b, rmask, m):
    hsz = h_prev.shape[-1]
    hr = h_prev if rmask is None else h_prev * rmask
    z = zx + hr @ Wh + b
    i = _sigmoid(z[..., :hsz])
    f = _sigmoid(z[..., hsz:2 * hsz])
    o = _sigmoid(z[..., 2 * hsz:3 * hsz])
    g = np.tanh(z[..., 3 * hsz:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    if m is not None:
        h = m * h + (1 - m) * h_prev
        c = m * c + (1 - m) * c_prev
    return h, c, (hr, c_prev, i, f, o, g, tc, rmask, m)


def _lstm_cell_backward(dh_out, dc_out, Wh, cache):
    hr, c_prev, i, f, o, g, tc, rmask, m = cache
    if m is not None:
        dh = m * dh_out
        dc = m * dc_out
    else:
        dh, dc = dh_out, dc_out
    dc = dc + dh * o * (1 - tc * tc)
    dz = np.concatenate([
        dc * g * i * (1 - i),
        dc * c_prev * f * (1 - f),
        dh * tc * o * (1 - o),
        dc * i * (1 - g * g),
    ], axis=-1)
    dhr = dz @ Wh.T
    dh_prev = dhr if rmask is None else dhr * rmask
    dc_prev = dc * f
    if m is not None:
        dh_prev = dh_prev + (1 - m) * dh_out
        dc_prev = dc_prev + (1 - m) * dc_out
    return dz, dh_prev, dc_prev, hr


def lstm_step(x_t, h_prev, c_prev, params, rmask=None):
    """One LSTM update; returns (h_t, c_t, cache)."""
    _check_inner(x_t, params["Wx"])
    if h_prev.shape[-1] * 4 != params["Wh"].shape[1]:
        raise ValueError(f"shape mismatch: state {h_prev.shape} vs recurrent weight {params['Wh'].shape}")
    h, c, cell = _lstm_cell(x_t @ params["Wx"], h_prev, c_prev, params["Wh"], params["b"], rmask, None)
    return h, c, (x_t, cell)


def lstm_step_backward(dh, dc, params, cache):
    """Return (dx, dh_prev, dc_prev, grads) for one step."""
    x_t, cell = cache
    dz, dh_prev, dc_prev, hr = _lstm_cell_backward(dh, dc, params["Wh"], cell)
    x2 = x_t.reshape(-1, x_t.shape[-1])
    dz2 = dz.reshape(-1, dz.shape[-1])
    grads = {"Wx": x2.T @ dz2, "Wh": hr.reshape(-1, hr.shape[-1]).T @ dz2, "b": dz2.sum(axis=0)}
    return dz @ params["Wx"].T, dh_prev, dc_prev, grads


def lstm_sequence(x, params, mask=None, rmask=None):
    """Run an LSTM left to right over x of shape (B, T, D).

    ``mask`` (B, T) marks valid steps; state is carried through padding and
    padded outputs are zero. ``rmask`` (B, H) is a variational recurrent mask.
    """
    B, T, _ = x.shape
    _check_inner(x, params["Wx"])
    hsz = params["Wh"].shape[0]
    zx = x @ params["Wx"]
    h = np.zeros((B, hsz), dtype=x.dtype)
    c = np.zeros_like(h)
    out = np.empty((B, T, hsz), dtype=x.dtype)
    caches = []
    for t in range(T):
        m = None if mask is None else mask[:, t:t + 1]
        h, c, cache = _lstm_cell(zx[:, t], h, c, params["Wh"], params["b"], rmask, m)
        caches.append(cache)
        out[:, t] = h if m is None else h * m
    return out, (x, mask, caches)


def lstm_sequence_backward(dout, params, cache):
    x, mask, caches = cache
    B, T, _ = x.shape
    hsz = params["Wh"].shape[0]
    dh = np.zeros((B, hsz), dtype=dout.dtype)
    dc = np.zeros_like(dh)
    dz_all = np.empty((B, T, 4 * hsz), dtype=dout.dtype)
    dWh = np.zeros_like(params["Wh"])
    for t in range(T - 1, -1, -1):
        d = dout[:, t] if mask is None else dout[:, t] * mask[:, t:t + 1]
        dz, dh, dc, hr = _lstm_cell_backward(dh + d, dc, params["Wh"], caches[t])
        dz_all[:, t] = dz
        dWh += hr.T @ dz
    dx = dz_all @ params["Wx"].T
    dz2 = dz_all.reshape(B * T, -1)
    grads = {"Wx": x.reshape(B * T, -1).T @ dz2, "Wh": dWh, "b": dz2.sum(axis=0)}
    return dx, grads


def reverse_index(lengths, T):
    """Per-row index that reverses each sequence within its own length."""
    t = np.arange(T)[None, :]
    L = np.asarray(lengths)[:, None]
    return np.where(t < L, L - 1 - t, t)


def bilstm(x, fwd, bwd, mask=None, lengths=None, rmasks=(None, None)):
    """Bidirectional LSTM whose two directions are summed per step."""
    B, T, _ = x.shape
    if lengths is None:
        lengths = np.full(B, T) if mask is None else mask.sum(axis=1).astype(int)
    rev = reverse_index(lengths, T)
    rows = np.arange(B)[:, None]
    hf, cf = lstm_sequence(x, fwd, mask, rmasks[0])
    hb_rev, cb = lstm_sequence(x[rows, rev], bwd, mask, rmasks[1])
    return hf + hb_rev[rows, rev], (cf, cb, rev)


def bilstm_backward(dout, fwd, bwd, cache):
    cf, cb, rev = cache
    rows = np.arange(dout.shape[0])[:, None]
    dxf, gf = lstm_sequence_backward(dout, fwd, cf)
    dxb_rev, gb = lstm_sequence_backward(dout[rows, rev], bwd, cb)
    return dxf + dxb_rev[rows, rev], gf, gb


# -- optimizer --------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(store: ParameterStore, state: AdamState):
    """Bias-corrected Adam update in place; frozen parameters are skipped entirely."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in store.items():
        if not p.trainable:
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(p.value)
            state.v[name] = np.zeros_like(p.value)
        m, v, g = state.m[name], state.v[name], p.grad
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * (g * g)
        p.value -= (state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)).astype(p.value.dtype)
