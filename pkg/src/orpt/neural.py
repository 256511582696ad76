"""Recurrent cells, BPTT, Adam and the TCN reference ops, in numpy.

Gate order for the LSTM is ``i, f, g, o`` in every ``4M``-row tensor.
Parameters live in a flat name -> array mapping:

``fwd.W_x`` (G, F), ``fwd.W_h`` (G, M) or (M,) for IndRNN, ``fwd.b`` (G,),
the same under ``bwd.`` for bidirectional nets, and the classifier
``out.W`` (C, M or 2M), ``out.b`` (C,). ``G`` is ``4M`` for the LSTM and
``M`` otherwise.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import kernels
from .numtheory import DomainError

CELL_KINDS = ("rnn", "indrnn", "lstm")

# float32 backward signals below this are zeroed each step; vanishing
# gradients otherwise decay into denormals, which stall the arithmetic.
FLUSH_F32 = 1e-30


class NumericError(ArithmeticError):
    pass


class CheckpointError(ValueError):
    pass


def _gate_width(cell_kind: str, M: int) -> int:
    return 4 * M if cell_kind == "lstm" else M


def parameter_count(cell_kind: str, F: int, M: int, C: int, bidirectional: bool = False) -> int:
    """Closed-form trainable parameter count."""
    if cell_kind == "lstm":
        cell = 4 * (M * (F + M) + M)
    elif cell_kind == "rnn":
        cell = M * (F + M) + M
    elif cell_kind == "indrnn":
        cell = M * F + 2 * M
    else:
        raise DomainError(f"unknown cell kind {cell_kind!r}")
    dirs = 2 if bidirectional else 1
    return dirs * cell + C * dirs * M + C


@dataclass(eq=False)
class RecurrentParams:
    cell_kind: str
    input_dim: int
    hidden_dim: int
    classes: int
    bidirectional: bool = False
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def directions(self) -> tuple[str, ...]:
        return ("fwd", "bwd") if self.bidirectional else ("fwd",)

    @property
    def dtype(self):
        return self.tensors["out.W"].dtype

    def shapes(self) -> dict[str, tuple[int, ...]]:
        F, M, C = self.input_dim, self.hidden_dim, self.classes
        G = _gate_width(self.cell_kind, M)
        out = {}
        for d in self.directions:
            out[f"{d}.W_x"] = (G, F)
            out[f"{d}.W_h"] = (M,) if self.cell_kind == "indrnn" else (G, M)
            out[f"{d}.b"] = (G,)
        out["out.W"] = (C, len(self.directions) * M)
        out["out.b"] = (C,)
        return out

    def size(self) -> int:
        return sum(int(v.size) for v in self.tensors.values())

    def validate(self) -> None:
        if self.cell_kind not in CELL_KINDS:
            raise DomainError(f"unknown cell kind {self.cell_kind!r}")
        want = self.shapes()
        if set(want) != set(self.tensors):
            raise DomainError(f"tensor names {sorted(self.tensors)} != {sorted(want)}")
        for name, shape in want.items():
            if self.tensors[name].shape != shape:
                raise DomainError(f"{name} has shape {self.tensors[name].shape}, want {shape}")
            if not np.all(np.isfinite(self.tensors[name])):
                raise NumericError(f"{name} contains non-finite values")

    def like(self, tensors: dict[str, np.ndarray]) -> "RecurrentParams":
        return RecurrentParams(
            self.cell_kind, self.input_dim, self.hidden_dim, self.classes,
            self.bidirectional, tensors,
        )

    def copy(self) -> "RecurrentParams":
        return self.like({k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype) -> "RecurrentParams":
        return self.like({k: v.astype(dtype) for k, v in self.tensors.items()})

    def zeros_like(self) -> "RecurrentParams":
        return self.like({k: np.zeros_like(v) for k, v in self.tensors.items()})

    def __getitem__(self, name):
        return self.tensors[name]


@dataclass
class HiddenState:
    h: np.ndarray
    c: np.ndarray | None = None


def _glorot(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _orthogonal(rng, rows, cols, dtype):
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return q[:rows, :cols].astype(dtype)


def init_params(
    cell_kind: str,
    input_dim: int,
    hidden_dim: int,
    classes: int,
    bidirectional: bool = False,
    seed: int | np.random.Generator = 0,
    dtype=np.float32,
) -> RecurrentParams:
    """Glorot input kernels, orthogonal recurrent kernels, unit forget bias."""
    if cell_kind not in CELL_KINDS:
        raise DomainError(f"unknown cell kind {cell_kind!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    F, M, C = input_dim, hidden_dim, classes
    G = _gate_width(cell_kind, M)
    p = RecurrentParams(cell_kind, F, M, C, bidirectional)
    for d in p.directions:
        p.tensors[f"{d}.W_x"] = _glorot(rng, (G, F), F, G, dtype)
        if cell_kind == "indrnn":
            p.tensors[f"{d}.W_h"] = rng.uniform(0.0, 1.0, size=M).astype(dtype)
        else:
            p.tensors[f"{d}.W_h"] = _orthogonal(rng, G, M, dtype)
        b = np.zeros(G, dtype=dtype)
        if cell_kind == "lstm":
            b[M:2 * M] = 1.0
        p.tensors[f"{d}.b"] = b
    width = len(p.directions) * M
    p.tensors["out.W"] = _glorot(rng, (C, width), width, C, dtype)
    p.tensors["out.b"] = np.zeros(C, dtype=dtype)
    return p


# single steps ---------------------------------------------------------------


def _step_inputs(p, h_prev, x_t, direction):
    W_x = p[f"{direction}.W_x"]
    h_prev = np.asarray(h_prev, dtype=W_x.dtype)
    x_t = np.asarray(x_t, dtype=W_x.dtype)
    if x_t.shape[-1] != p.input_dim or h_prev.shape[-1] != p.hidden_dim:
        raise DomainError(
            f"step got x of width {x_t.shape[-1]} and h of width {h_prev.shape[-1]}; "
            f"params expect {p.input_dim} and {p.hidden_dim}"
        )
    return h_prev, x_t, x_t @ W_x.T + p[f"{direction}.b"]


def rnn_step(p: RecurrentParams, h_prev, x_t, direction="fwd") -> HiddenState:
    """``h = tanh(W_h h_prev + W_x x + b)``."""
    h_prev, x_t, a = _step_inputs(p, h_prev, x_t, direction)
    return HiddenState(np.tanh(a + h_prev @ p[f"{direction}.W_h"].T))


def indrnn_step(p: RecurrentParams, h_prev, x_t, direction="fwd") -> HiddenState:
    """``h = relu(w_h * h_prev + W_x x + b)`` with a per-unit recurrent weight."""
    h_prev, x_t, a = _step_inputs(p, h_prev, x_t, direction)
    return HiddenState(np.maximum(a + p[f"{direction}.W_h"] * h_prev, 0))


def lstm_step(p: RecurrentParams, state: HiddenState, x_t, direction="fwd") -> HiddenState:
    h_prev, x_t, a = _step_inputs(p, state.h, x_t, direction)
    c_prev = np.asarray(state.c, dtype=a.dtype)
    a = a + h_prev @ p[f"{direction}.W_h"].T
    squeeze = a.ndim == 1
    a2 = np.ascontiguousarray(np.atleast_2d(a))
    c, h, _ = kernels.lstm_forward_pointwise(a2, np.ascontiguousarray(np.atleast_2d(c_prev)))
    if squeeze:
        c, h = c[0], h[0]
    return HiddenState(h, c)


# batched sequence forward/backward -----------------------------------------


@dataclass
class _DirCache:
    X: np.ndarray
    H: np.ndarray  # (T + 1, B, M), H[0] is the initial state
    A: np.ndarray | None = None  # gates (lstm) or pre-activations (indrnn)
    Cs: np.ndarray | None = None
    tanhC: np.ndarray | None = None


def _run_direction(p, X, direction):
    """Unroll one direction over ``X`` (B, T, F); returns the cache."""
    kind = p.cell_kind
    B, T, _ = X.shape
    M = p.hidden_dim
    dt = p.dtype
    W_h = p[f"{direction}.W_h"]
    XW = X @ p[f"{direction}.W_x"].T + p[f"{direction}.b"]  # (B, T, G)
    XW = np.ascontiguousarray(XW.transpose(1, 0, 2))  # (T, B, G)
    H = np.zeros((T + 1, B, M), dtype=dt)
    cache = _DirCache(X, H)
    if kind == "rnn":
        W_hT = np.ascontiguousarray(W_h.T)
        for t in range(T):
            np.tanh(XW[t] + H[t] @ W_hT, out=H[t + 1])
    elif kind == "indrnn":
        for t in range(T):
            XW[t] += W_h * H[t]
            np.maximum(XW[t], 0, out=H[t + 1])
        cache.A = XW
    else:
        W_hT = np.ascontiguousarray(W_h.T)
        Cs = np.zeros((T + 1, B, M), dtype=dt)
        tanhC = np.empty((T, B, M), dtype=dt)
        fwd = kernels.lstm_forward_pointwise
        for t in range(T):
            a = XW[t]
            a += H[t] @ W_hT
            Cs[t + 1], H[t + 1], tanhC[t] = fwd(a, Cs[t])
        cache.A, cache.Cs, cache.tanhC = XW, Cs, tanhC
    return cache


def _flush_small(x):
    np.copyto(x, 0, where=np.abs(x) < FLUSH_F32)
    return x


def _flusher(dtype):
    return _flush_small if dtype == np.float32 else (lambda x: x)


def _backprop_direction(p, cache, dh_last, direction, grads):
    kind = p.cell_kind
    H = cache.H
    T, B, M = H.shape[0] - 1, H.shape[1], H.shape[2]
    W_h = p[f"{direction}.W_h"]
    G = _gate_width(kind, M)
    dA = np.empty((T, B, G), dtype=H.dtype)
    dh = dh_last
    flush = _flusher(H.dtype)
    if kind == "rnn":
        for t in range(T - 1, -1, -1):
            h = H[t + 1]
            da = dh * (1 - h * h)
            dA[t] = da
            dh = flush(da @ W_h)
        grads[f"{direction}.W_h"] = np.tensordot(dA, H[:-1], axes=([0, 1], [0, 1]))
    elif kind == "indrnn":
        for t in range(T - 1, -1, -1):
            da = dh * (cache.A[t] > 0)
            dA[t] = da
            dh = flush(da * W_h)
        grads[f"{direction}.W_h"] = np.einsum("tbm,tbm->m", dA, H[:-1])
    else:
        bwd = kernels.lstm_backward_pointwise
        dc = np.zeros((B, M), dtype=H.dtype)
        for t in range(T - 1, -1, -1):
            da, dc = bwd(
                np.ascontiguousarray(dh), dc, cache.A[t], cache.Cs[t], cache.tanhC[t]
            )
            dA[t] = da
            dh = flush(da @ W_h)
            dc = flush(dc)
        grads[f"{direction}.W_h"] = np.tensordot(dA, H[:-1], axes=([0, 1], [0, 1]))
    X_t = cache.X.transpose(1, 0, 2)  # (T, B, F)
    grads[f"{direction}.W_x"] = np.tensordot(dA, X_t, axes=([0, 1], [0, 1]))
    grads[f"{direction}.b"] = dA.sum(axis=(0, 1))


def _batch_array(p, batch):
    if isinstance(batch, np.ndarray):
        X = batch
    else:
        X = np.stack([np.asarray(s.values) for s in batch])
    if X.ndim != 3 or X.shape[2] != p.input_dim:
        raise DomainError(f"batch of shape {X.shape} does not match input width {p.input_dim}")
    return np.ascontiguousarray(X, dtype=p.dtype)


def forward(p: RecurrentParams, X):
    """Logits for a batch ``X`` (B, T, F); also returns the caches for BPTT."""
    X = _batch_array(p, X)
    caches = [_run_direction(p, X, "fwd")]
    if p.bidirectional:
        caches.append(_run_direction(p, np.ascontiguousarray(X[:, ::-1]), "bwd"))
    feats = np.concatenate([c.H[-1] for c in caches], axis=1)
    logits = feats @ p["out.W"].T + p["out.b"]
    return logits, (caches, feats)


def predict(p: RecurrentParams, X, batch_size: int = 500) -> np.ndarray:
    out = []
    for s in range(0, len(X), batch_size):
        logits, _ = forward(p, X[s : s + batch_size])
        out.append(np.argmax(logits, axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def run_sequence(p: RecurrentParams, sample, direction: str = "forward") -> np.ndarray:
    """Class logits for one sample, from the last hidden state(s)."""
    want_bi = {"forward": False, "bidirectional": True}.get(direction)
    if want_bi is None:
        raise DomainError(f"direction must be 'forward' or 'bidirectional', got {direction!r}")
    if want_bi != p.bidirectional:
        raise DomainError(f"{direction} run requested on params with bidirectional={p.bidirectional}")
    values = np.asarray(getattr(sample, "values", sample))
    logits, _ = forward(p, values[None])
    return logits[0]


def softmax_cross_entropy(logits, labels):
    """Mean loss, per-sample losses and d(mean loss)/d(logits)."""
    with np.errstate(invalid="ignore", over="ignore"):
        z = logits - logits.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(z).sum(axis=1))
        B = len(labels)
        per = logsum - z[np.arange(B), labels]
        probs = np.exp(z - logsum[:, None])
    probs[np.arange(B), labels] -= 1
    return per.mean(), per, probs / B


def loss_and_grad(p: RecurrentParams, batch, labels=None, with_logits=False):
    """Mean softmax cross-entropy over the batch and its exact BPTT gradient.

    ``batch`` is an array (B, T, F) together with ``labels``, or a list of
    :class:`~orpt.subband.SequenceSample`. With ``with_logits`` the logits
    are returned as a third element.
    """
    if labels is None:
        labels = np.array([s.label for s in batch])
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise DomainError("empty batch")
    logits, (caches, feats) = forward(p, batch)
    loss, per, dlogits = softmax_cross_entropy(logits, labels)
    if not np.isfinite(loss):
        bad = int(np.flatnonzero(~np.isfinite(per))[0])
        raise NumericError(f"non-finite loss at batch index {bad}")
    dlogits = dlogits.astype(p.dtype)
    grads = {"out.W": dlogits.T @ feats, "out.b": dlogits.sum(axis=0)}
    dfeat = dlogits @ p["out.W"]
    M = p.hidden_dim
    for i, (cache, direction) in enumerate(zip(caches, p.directions)):
        dh = np.ascontiguousarray(dfeat[:, i * M : (i + 1) * M])
        _backprop_direction(p, cache, dh, direction, grads)
    grad = p.like({k: grads[k].astype(p.dtype) for k in p.tensors})
    if with_logits:
        return float(loss), grad, logits
    return float(loss), grad


# optimizer ------------------------------------------------------------------


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def global_norm(grad: RecurrentParams) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grad.tensors.values())))


def clip_by_global_norm(grad: RecurrentParams, clip: float | None) -> RecurrentParams:
    norm = global_norm(grad)
    if not np.isfinite(norm):
        raise NumericError("non-finite gradient")
    if clip is None or clip <= 0 or norm <= clip:
        return grad
    scale = clip / norm
    return grad.like({k: (g * scale).astype(g.dtype) for k, g in grad.tensors.items()})


def adam_update(
    p: RecurrentParams,
    grad: RecurrentParams,
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    clip: float | None = 1.0,
) -> RecurrentParams:
    """Global-norm clipping followed by bias-corrected Adam; ``state`` is updated in place."""
    if set(grad.tensors) != set(p.tensors):
        raise DomainError("gradient and parameter names differ")
    grad = clip_by_global_norm(grad, clip)
    state.step += 1
    t = state.step
    lr_t = lr * np.sqrt(1 - beta2**t) / (1 - beta1**t)
    new = {}
    for name, w in p.tensors.items():
        g = grad[name]
        if g.shape != w.shape:
            raise DomainError(f"gradient {name} has shape {g.shape}, want {w.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(w)
            state.v[name] = np.zeros_like(w)
        v = state.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        new[name] = (w - lr_t * m / (np.sqrt(v) + eps)).astype(w.dtype)
    return p.like(new)


# TCN reference ops ----------------------------------------------------------


@dataclass(frozen=True)
class ConvSpec:
    taps: tuple[float, ...]
    dilation: int = 1

    def __post_init__(self):
        if len(self.taps) < 1:
            raise DomainError("filter needs at least one tap")
        if not isinstance(self.dilation, int) or self.dilation < 1:
            raise DomainError(f"dilation must be a positive int, got {self.dilation!r}")

    @property
    def receptive_field(self) -> int:
        return (len(self.taps) - 1) * self.dilation + 1


def dilated_causal_conv(spec: ConvSpec, x) -> np.ndarray:
    """``out[k] = sum_i taps[i] * x[k - dilation * i]`` with zeros before the start."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise DomainError("input must be a non-empty 1-D sequence")
    return kernels.dilated_causal_conv(x, np.asarray(spec.taps, dtype=np.float64), spec.dilation)


def residual_block(
    x,
    transform: Callable[[np.ndarray], np.ndarray],
    projection: np.ndarray | None = None,
) -> np.ndarray:
    """``relu(shortcut(x) + transform(x))``.

    ``x`` is (T,) or (T, channels). When ``projection`` (out, in) is given it
    acts as a 1x1 convolution on the shortcut so the widths can differ.
    """
    x = np.asarray(x, dtype=np.float64)
    fx = np.asarray(transform(x), dtype=np.float64)
    shortcut = x if projection is None else x @ np.asarray(projection, dtype=np.float64).T
    if fx.shape != shortcut.shape:
        raise DomainError(f"transform output {fx.shape} does not match shortcut {shortcut.shape}")
    return np.maximum(shortcut + fx, 0.0)


# checkpoints ----------------------------------------------------------------

CKPT_MAGIC = b"ORPTCKPT"
CKPT_VERSION = 1
_CKPT_HEAD = struct.Struct("<8sII")


def save_checkpoint(p: RecurrentParams, path) -> None:
    """Versioned binary dump: header (with CRC32) then little-endian float32 tensors."""
    names = sorted(p.tensors)
    meta = struct.pack(
        "<16sIIII?", p.cell_kind.encode(), p.input_dim, p.hidden_dim, p.classes,
        len(names), p.bidirectional,
    )
    for name in names:
        shape = p.tensors[name].shape
        enc = name.encode()
        meta += struct.pack(f"<H{len(enc)}sB{len(shape)}I", len(enc), enc, len(shape), *shape)
    payload = b"".join(np.ascontiguousarray(p.tensors[n], dtype="<f4").tobytes() for n in names)
    head = _CKPT_HEAD.pack(CKPT_MAGIC, CKPT_VERSION, len(meta))
    crc = zlib.crc32(head + meta)
    Path(path).write_bytes(head + meta + struct.pack("<I", crc) + payload)


def load_checkpoint(path) -> RecurrentParams:
    data = Path(path).read_bytes()
    if len(data) < _CKPT_HEAD.size:
        raise CheckpointError(f"{path}: truncated checkpoint")
    magic, version, meta_len = _CKPT_HEAD.unpack_from(data)
    if magic != CKPT_MAGIC or version != CKPT_VERSION:
        raise CheckpointError(f"{path}: not a version-{CKPT_VERSION} checkpoint")
    end = _CKPT_HEAD.size + meta_len
    (crc,) = struct.unpack_from("<I", data, end)
    if zlib.crc32(data[:end]) != crc:
        raise CheckpointError(f"{path}: header checksum mismatch")
    kind, F, M, C, count, bi = struct.unpack_from("<16sIIII?", data, _CKPT_HEAD.size)
    off = _CKPT_HEAD.size + struct.calcsize("<16sIIII?")
    specs = []
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, off)
        name = data[off + 2 : off + 2 + n].decode()
        off += 2 + n
        (ndim,) = struct.unpack_from("<B", data, off)
        shape = struct.unpack_from(f"<{ndim}I", data, off + 1)
        off += 1 + 4 * ndim
        specs.append((name, shape))
    off = end + 4
    tensors = {}
    for name, shape in specs:
        size = int(np.prod(shape))
        if off + 4 * size > len(data):
            raise CheckpointError(f"{path}: payload truncated in {name}")
        tensors[name] = np.frombuffer(data, "<f4", size, off).reshape(shape).astype(np.float32)
        off += 4 * size
    p = RecurrentParams(kind.rstrip(b"\0").decode(), F, M, C, bi, tensors)
    p.validate()
    return p
