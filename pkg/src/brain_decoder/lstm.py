"""Two-layer LSTM sequence decoder with a softmax read-out.

Every layer applies the standard LSTM recurrences over the concatenation
``[h_{t-1}, x_t]`` (hidden state first)::

    f = sigmoid(W_f z + b_f)      i = sigmoid(W_i z + b_i)
    g = tanh(W_c z + b_c)         o = sigmoid(W_o z + b_o)
    c_t = f * c_{t-1} + i * g     h_t = o * tanh(c_t)

Layer 1 reads the feature sequence, layer 2 reads layer 1's hidden states
and the per-timepoint state probabilities are ``softmax(W_s h2_t + b_s)``.
Gradients of the mean softmax cross-entropy are computed exactly by
backpropagation through time.

All functions accept a single sequence ``(T, K)`` or a batch ``(B, T, K)``
of equal-length sequences.
"""

from collections import namedtuple
from dataclasses import dataclass
import io
import struct

import numpy as np

from .errors import CheckpointError, NumericError, ShapeError

__all__ = [
    "LayerParams",
    "DecoderParams",
    "LstmState",
    "ForwardCache",
    "init_params",
    "sigmoid",
    "cell_step",
    "forward",
    "cross_entropy",
    "backward",
    "loss_and_grad",
    "predict",
    "save_checkpoint",
    "load_checkpoint",
    "dumps_checkpoint",
    "loads_checkpoint",
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
    "TENSOR_ORDER",
]

DEFAULT_HIDDEN = 256

LstmState = namedtuple("LstmState", ["h", "c"])

_LAYER_FIELDS = ("w_f", "w_i", "w_c", "w_o", "b_f", "b_i", "b_c", "b_o")

#: Checkpoint tensor order; part of the on-disk format.
TENSOR_ORDER = tuple(
    [f"layer1.{n}" for n in _LAYER_FIELDS]
    + [f"layer2.{n}" for n in _LAYER_FIELDS]
    + ["w_s", "b_s"]
)

CHECKPOINT_MAGIC = b"LSTMDEC1"
CHECKPOINT_VERSION = 1


@dataclass
class LayerParams:
    """Gate weights ``(H, H + I)`` over ``[h_prev, x]`` and gate biases ``(H,)``."""

    w_f: np.ndarray
    w_i: np.ndarray
    w_c: np.ndarray
    w_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        h = np.shape(self.w_f)[0]
        shape = np.shape(self.w_f)
        if len(shape) != 2 or shape[1] < h:
            raise ShapeError(f"gate weight shape {shape} is not (H, H + I)")
        for name in ("w_i", "w_c", "w_o"):
            if np.shape(getattr(self, name)) != shape:
                raise ShapeError(f"{name} has shape {np.shape(getattr(self, name))}, expected {shape}")
        for name in ("b_f", "b_i", "b_c", "b_o"):
            if np.shape(getattr(self, name)) != (h,):
                raise ShapeError(f"{name} has shape {np.shape(getattr(self, name))}, expected {(h,)}")

    @property
    def hidden_size(self):
        return self.w_f.shape[0]

    @property
    def input_size(self):
        return self.w_f.shape[1] - self.w_f.shape[0]

    def stacked(self):
        """Gate weights stacked as ``(4H, H + I)`` and biases as ``(4H,)`` in f, i, c, o order."""
        w = np.concatenate([self.w_f, self.w_i, self.w_c, self.w_o], axis=0)
        b = np.concatenate([self.b_f, self.b_i, self.b_c, self.b_o])
        return w, b

    @classmethod
    def from_stacked(cls, w, b):
        h = w.shape[0] // 4
        return cls(*(w[k * h:(k + 1) * h] for k in range(4)),
                   *(b[k * h:(k + 1) * h] for k in range(4)))

    def arrays(self):
        return [getattr(self, n) for n in _LAYER_FIELDS]


@dataclass
class DecoderParams:
    """All trainable tensors of the decoder.

    The same structure doubles as the gradient container returned by
    :func:`backward`.
    """

    layer1: LayerParams
    layer2: LayerParams
    w_s: np.ndarray
    b_s: np.ndarray

    def __post_init__(self):
        if self.layer2.input_size != self.layer1.hidden_size:
            raise ShapeError(
                f"layer2 input size {self.layer2.input_size} != layer1 hidden size "
                f"{self.layer1.hidden_size}"
            )
        if np.ndim(self.w_s) != 2 or self.w_s.shape[1] != self.layer2.hidden_size:
            raise ShapeError(f"w_s shape {np.shape(self.w_s)} does not match hidden size "
                             f"{self.layer2.hidden_size}")
        if np.shape(self.b_s) != (self.w_s.shape[0],):
            raise ShapeError(f"b_s shape {np.shape(self.b_s)} != ({self.w_s.shape[0]},)")

    @property
    def n_features(self):
        return self.layer1.input_size

    @property
    def hidden_size(self):
        return self.layer1.hidden_size

    @property
    def n_states(self):
        return self.w_s.shape[0]

    def arrays(self):
        """Tensors in :data:`TENSOR_ORDER`."""
        return self.layer1.arrays() + self.layer2.arrays() + [self.w_s, self.b_s]

    def named_arrays(self):
        return list(zip(TENSOR_ORDER, self.arrays()))

    @classmethod
    def from_arrays(cls, arrays):
        arrays = list(arrays)
        if len(arrays) != len(TENSOR_ORDER):
            raise ShapeError(f"expected {len(TENSOR_ORDER)} tensors, got {len(arrays)}")
        return cls(LayerParams(*arrays[:8]), LayerParams(*arrays[8:16]), arrays[16], arrays[17])

    def copy(self):
        return DecoderParams.from_arrays([a.copy() for a in self.arrays()])

    @classmethod
    def zeros(cls, n_features, hidden, n_states):
        def layer(n_in):
            w = [np.zeros((hidden, hidden + n_in)) for _ in range(4)]
            b = [np.zeros(hidden) for _ in range(4)]
            return LayerParams(*w, *b)
        return cls(layer(n_features), layer(hidden), np.zeros((n_states, hidden)), np.zeros(n_states))


def _glorot(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_params(n_features, n_states, hidden=DEFAULT_HIDDEN, rng=None):
    """Glorot-uniform weights, zero biases except a forget-gate bias of one."""
    rng = np.random.default_rng(rng)

    def layer(n_in):
        w = [_glorot(rng, hidden, hidden + n_in) for _ in range(4)]
        b = [np.zeros(hidden) for _ in range(4)]
        b[0][:] = 1.0
        return LayerParams(*w, *b)

    l1 = layer(n_features)
    l2 = layer(hidden)
    return DecoderParams(l1, l2, _glorot(rng, n_states, hidden), np.zeros(n_states))


def sigmoid(x):
    """Logistic function, evaluated without overflow for either sign."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def cell_step(x, prev, p):
    """Advance one LSTM layer by one time point.

    ``x`` is ``(I,)`` or ``(B, I)``; ``prev`` is an :class:`LstmState` whose
    ``h`` and ``c`` broadcast against it.  Returns the new state.
    """
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(prev.h, dtype=np.float64)
    c_prev = np.asarray(prev.c, dtype=np.float64)
    if x.shape[-1] != p.input_size:
        raise ShapeError(f"input size {x.shape[-1]} != layer input size {p.input_size}")
    if h_prev.shape[-1] != p.hidden_size or c_prev.shape[-1] != p.hidden_size:
        raise ShapeError(f"state size {h_prev.shape[-1]} != hidden size {p.hidden_size}")
    w, b = p.stacked()
    lead = np.broadcast_shapes(x.shape[:-1], h_prev.shape[:-1], c_prev.shape[:-1])
    z = np.concatenate([np.broadcast_to(h_prev, lead + h_prev.shape[-1:]),
                        np.broadcast_to(x, lead + x.shape[-1:])], axis=-1)
    a = z @ w.T + b
    H = p.hidden_size
    f = sigmoid(a[..., :H])
    i = sigmoid(a[..., H:2 * H])
    g = np.tanh(a[..., 2 * H:3 * H])
    o = sigmoid(a[..., 3 * H:])
    c = f * c_prev + i * g
    return LstmState(o * np.tanh(c), c)


@dataclass
class _LayerTrace:
    z: np.ndarray      # (T, B, H + I) concatenated [h_prev, x]
    f: np.ndarray      # (T, B, H)
    i: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray      # cell state after each step
    c_prev: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray      # (T, B, H)


@dataclass
class ForwardCache:
    """Activations recorded by :func:`forward` for use by :func:`backward`."""

    features: np.ndarray   # (B, T, K)
    batched: bool
    layer1: _LayerTrace
    layer2: _LayerTrace
    logits: np.ndarray     # (B, T, S)
    log_probs: np.ndarray  # (B, T, S)
    params_id: int


def _layer_forward(x, p, h0, c0):
    # x: (T, B, I)
    T, B, _ = x.shape
    H = p.hidden_size
    w, b = p.stacked()
    wt = w.T
    z = np.empty((T, B, H + x.shape[2]))
    acts = np.empty((T, B, 4 * H))
    c = np.empty((T, B, H))
    tanh_c = np.empty((T, B, H))
    h = np.empty((T, B, H))
    h_prev, c_prev = h0, c0
    for t in range(T):
        z[t, :, :H] = h_prev
        z[t, :, H:] = x[t]
        a = z[t] @ wt + b
        acts[t, :, :2 * H] = sigmoid(a[:, :2 * H])
        acts[t, :, 2 * H:3 * H] = np.tanh(a[:, 2 * H:3 * H])
        acts[t, :, 3 * H:] = sigmoid(a[:, 3 * H:])
        c[t] = acts[t, :, :H] * c_prev + acts[t, :, H:2 * H] * acts[t, :, 2 * H:3 * H]
        tanh_c[t] = np.tanh(c[t])
        h[t] = acts[t, :, 3 * H:] * tanh_c[t]
        h_prev, c_prev = h[t], c[t]
    c_prevs = np.concatenate([c0[None], c[:-1]], axis=0)
    return _LayerTrace(z, acts[..., :H], acts[..., H:2 * H], acts[..., 2 * H:3 * H],
                       acts[..., 3 * H:], c, c_prevs, tanh_c, h)


def _as_batch(f, n_features):
    f = np.asarray(f, dtype=np.float64)
    batched = f.ndim == 3
    if f.ndim == 2:
        f = f[None]
    if f.ndim != 3:
        raise ShapeError(f"feature sequence must be (T, K) or (B, T, K), got {f.shape}")
    if f.shape[2] != n_features:
        raise ShapeError(f"feature count {f.shape[2]} != decoder input size {n_features}")
    if f.shape[1] == 0:
        raise ShapeError("feature sequence is empty")
    return f, batched


def _log_softmax(logits):
    m = logits.max(axis=-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def forward(f, p, init=None):
    """Run the decoder over a sequence.

    Parameters
    ----------
    f : array_like, shape (T, K) or (B, T, K)
    p : DecoderParams
    init : tuple of two LstmState, optional
        Initial states of layer 1 and layer 2; zeros when omitted.

    Returns
    -------
    probs : ndarray, shape (T, S) or (B, T, S)
    cache : ForwardCache
    """
    x, batched = _as_batch(f, p.n_features)
    B, T, _ = x.shape
    H = p.hidden_size
    if init is None:
        states = [LstmState(np.zeros((B, H)), np.zeros((B, H)))] * 2
    else:
        states = [LstmState(np.broadcast_to(np.asarray(s.h, float), (B, H)).copy(),
                            np.broadcast_to(np.asarray(s.c, float), (B, H)).copy()) for s in init]
    xt = np.ascontiguousarray(x.transpose(1, 0, 2))
    tr1 = _layer_forward(xt, p.layer1, *states[0])
    tr2 = _layer_forward(tr1.h, p.layer2, *states[1])
    logits = (tr2.h @ p.w_s.T + p.b_s).transpose(1, 0, 2)
    finite = np.isfinite(logits).all(axis=(0, 2))
    if not finite.all():
        raise NumericError(f"non-finite activation at time point {int(np.argmin(finite))}")
    log_probs = _log_softmax(logits)
    probs = np.exp(log_probs)
    cache = ForwardCache(x, batched, tr1, tr2, logits, log_probs, id(p))
    return (probs if batched else probs[0]), cache


def cross_entropy(probs, labels):
    """Mean negative log-probability of the true states."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.shape[:-1] != labels.shape:
        raise ShapeError(f"probability shape {probs.shape} does not match labels {labels.shape}")
    S = probs.shape[-1]
    if labels.size and (labels.min() < 0 or labels.max() >= S):
        raise ShapeError(f"labels must lie in [0, {S})")
    picked = np.take_along_axis(probs, labels[..., None].astype(np.int64), axis=-1)[..., 0]
    with np.errstate(divide="ignore"):
        return float(-np.mean(np.log(picked)))


def _layer_backward(tr, p, dh_out):
    # dh_out: (T, B, H) gradient arriving at each h_t from above
    T, B, H = dh_out.shape
    w, _ = p.stacked()
    dw = np.zeros_like(w)
    db = np.zeros(4 * H)
    dx = np.empty((T, B, w.shape[1] - H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    da = np.empty((B, 4 * H))
    for t in range(T - 1, -1, -1):
        dh = dh_out[t] + dh_next
        o, f, i, g = tr.o[t], tr.f[t], tr.i[t], tr.g[t]
        tc = tr.tanh_c[t]
        dc = dh * o * (1.0 - tc * tc) + dc_next
        da[:, :H] = dc * tr.c_prev[t] * f * (1.0 - f)
        da[:, H:2 * H] = dc * g * i * (1.0 - i)
        da[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        da[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dw += da.T @ tr.z[t]
        db += da.sum(axis=0)
        dz = da @ w
        dh_next = dz[:, :H]
        dx[t] = dz[:, H:]
        dc_next = dc * f
    return LayerParams.from_stacked(dw, db), dx


def backward(f, labels, p, cache):
    """Loss and exact gradients of the mean cross-entropy.

    The mean runs over every time point of every sequence in the batch, so a
    batch of identical clips yields the single-clip gradient.

    Returns
    -------
    loss : float
    grads : DecoderParams
        Shape-matched gradients for every parameter tensor.
    """
    x, _ = _as_batch(f, p.n_features)
    if cache.params_id != id(p) or x.shape != cache.features.shape or not np.array_equal(x, cache.features):
        raise ShapeError("forward cache was not produced from these features and parameters")
    B, T, _ = x.shape
    S = p.n_states
    labels = np.asarray(labels)
    if labels.ndim == 1:
        labels = labels[None]
    if labels.shape != (B, T):
        raise ShapeError(f"labels shape {labels.shape} does not match ({B}, {T})")
    if labels.min() < 0 or labels.max() >= S:
        raise ShapeError(f"labels must lie in [0, {S})")
    labels = labels.astype(np.int64)
    lp = cache.log_probs
    loss = float(-np.take_along_axis(lp, labels[..., None], axis=-1).mean())

    dlogits = np.exp(lp)
    np.put_along_axis(dlogits, labels[..., None],
                      np.take_along_axis(dlogits, labels[..., None], axis=-1) - 1.0, axis=-1)
    dlogits /= B * T
    dlogits = dlogits.transpose(1, 0, 2)  # (T, B, S)
    h2 = cache.layer2.h
    dw_s = np.einsum("tbs,tbh->sh", dlogits, h2)
    db_s = dlogits.sum(axis=(0, 1))
    dh2 = dlogits @ p.w_s
    g2, dh1 = _layer_backward(cache.layer2, p.layer2, dh2)
    g1, _ = _layer_backward(cache.layer1, p.layer1, dh1)
    grads = DecoderParams(g1, g2, dw_s, db_s)
    for name, arr in grads.named_arrays():
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite gradient in {name}")
    return loss, grads


def loss_and_grad(f, labels, p):
    """Convenience wrapper: forward followed by backward."""
    _, cache = forward(f, p)
    return backward(f, labels, p, cache)


def predict(f, p):
    """Most probable state per time point (ties go to the lowest index)."""
    probs, _ = forward(f, p)
    return np.argmax(probs, axis=-1)


def dumps_checkpoint(p):
    """Serialize parameters to the ``LSTMDEC1`` binary layout."""
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<B", CHECKPOINT_VERSION))
    for arr in p.arrays():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes(order="C"))
    return buf.getvalue()


def loads_checkpoint(data):
    """Parse bytes written by :func:`dumps_checkpoint`."""
    n_magic = len(CHECKPOINT_MAGIC)
    if data[:n_magic] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad checkpoint magic")
    if len(data) < n_magic + 1 or data[n_magic] != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version "
                              f"{data[n_magic] if len(data) > n_magic else None}")
    pos = n_magic + 1
    arrays = []
    try:
        for name in TENSOR_ORDER:
            (rank,) = struct.unpack_from("<I", data, pos)
            pos += 4
            if rank > 2:
                raise CheckpointError(f"tensor {name} has rank {rank}")
            dims = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            count = int(np.prod(dims, dtype=np.int64))
            if pos + 8 * count > len(data):
                raise CheckpointError(f"truncated checkpoint in tensor {name}")
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(dims)
            pos += 8 * count
            arrays.append(arr.astype(np.float64))
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    if pos != len(data):
        raise CheckpointError(f"{len(data) - pos} trailing bytes after checkpoint")
    try:
        return DecoderParams.from_arrays(arrays)
    except ShapeError as exc:
        raise CheckpointError(f"inconsistent checkpoint tensors: {exc}") from None


def save_checkpoint(path, p):
    with open(path, "wb") as fh:
        fh.write(dumps_checkpoint(p))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return loads_checkpoint(fh.read())
