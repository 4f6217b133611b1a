"""From-scratch numeric core: stacked LSTM network with exact BPTT gradients.

The network is three LSTM layers followed by two dense layers with a softmax
output; dropout sits after LSTM 1, LSTM 2 and dense 1. The third LSTM layer
contributes only its final hidden state (one prediction per window). All
arithmetic is float64; gate storage order is (input, forget, candidate,
output) along the 4H axis.

Forward/backward are batched: inputs are [batch, window_len, 1] arrays and
single samples are batches of one.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

LSTM_LAYERS = 3


class StaleCacheError(ValueError):
    """Backward needs the cache of a train-mode forward pass."""


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class NetworkSpec:
    """Architecture hyperparameters of the 3-LSTM / 2-dense stack."""

    vocab_size: int
    window_len: int = 80
    lstm_width: int = 512
    dense1_width: int = 256
    dropout_rate: float = 0.3
    dense1_relu: bool = False

    def __post_init__(self) -> None:
        if min(self.vocab_size, self.window_len, self.lstm_width, self.dense1_width) < 1:
            raise ValueError(f"spec dimensions must be positive: {self}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate {self.dropout_rate} outside [0, 1)")

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "window_len": self.window_len,
            "lstm_width": self.lstm_width,
            "dense1_width": self.dense1_width,
            "dropout_rate": self.dropout_rate,
            "dense1_relu": self.dense1_relu,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(**d)


@dataclass
class LstmLayerParams:
    """Gate weights of one LSTM layer: W [4H x D], U [4H x H], b [4H]."""

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    @property
    def hidden(self) -> int:
        return self.U.shape[1]


@dataclass
class DenseParams:
    W: np.ndarray  # [K x D]
    b: np.ndarray  # [K]


@dataclass
class LayerState:
    """Recurrent state of one LSTM layer; zeros at sequence start."""

    h: np.ndarray
    c: np.ndarray


@dataclass
class NetworkParams:
    """All weight tensors; also reused as the container for gradients."""

    lstm: list[LstmLayerParams]
    dense1: DenseParams
    dense2: DenseParams

    def named_tensors(self) -> list[tuple[str, np.ndarray]]:
        """Fixed (name, array) order; serialization and updates rely on it."""
        out = []
        for i, layer in enumerate(self.lstm, start=1):
            out += [(f"lstm{i}.W", layer.W), (f"lstm{i}.U", layer.U), (f"lstm{i}.b", layer.b)]
        out += [("dense1.W", self.dense1.W), ("dense1.b", self.dense1.b)]
        out += [("dense2.W", self.dense2.W), ("dense2.b", self.dense2.b)]
        return out

    @classmethod
    def zeros(cls, spec: NetworkSpec) -> "NetworkParams":
        H, V, K = spec.lstm_width, spec.vocab_size, spec.dense1_width
        layers = []
        for i in range(LSTM_LAYERS):
            D = 1 if i == 0 else H
            layers.append(
                LstmLayerParams(
                    W=np.zeros((4 * H, D)), U=np.zeros((4 * H, H)), b=np.zeros(4 * H)
                )
            )
        return cls(
            lstm=layers,
            dense1=DenseParams(W=np.zeros((K, H)), b=np.zeros(K)),
            dense2=DenseParams(W=np.zeros((V, K)), b=np.zeros(V)),
        )


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def init_params(spec: NetworkSpec, rng_seed) -> NetworkParams:
    """Glorot-uniform kernels, zero biases except forget-gate bias of 1.

    Draw order is fixed (layer by layer, W before U, then dense kernels) so a
    given seed always yields bitwise-identical parameters.
    """
    rng = _as_generator(rng_seed)
    params = NetworkParams.zeros(spec)
    H = spec.lstm_width
    for layer in params.lstm:
        layer.W[...] = _glorot(rng, layer.W.shape)
        layer.U[...] = _glorot(rng, layer.U.shape)
        layer.b[H : 2 * H] = 1.0  # open forget gate at start of training
    params.dense1.W[...] = _glorot(rng, params.dense1.W.shape)
    params.dense2.W[...] = _glorot(rng, params.dense2.W.shape)
    return params


def _glorot(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    fan_out, fan_in = shape
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def lstm_cell_forward(
    x: np.ndarray, state: LayerState, p: LstmLayerParams
) -> tuple[LayerState, dict]:
    """One LSTM timestep.

    i = sig(Wi x + Ui h + bi), f = sig(...), g = tanh(...), o = sig(...);
    c' = f*c + i*g; h' = o*tanh(c'). Works on single vectors [D] or batches
    [B, D]. The cache holds the activations backward needs.
    """
    H = p.hidden
    if x.shape[-1] != p.W.shape[1]:
        raise ValueError(f"input width {x.shape[-1]} != layer input width {p.W.shape[1]}")
    z = x @ p.W.T + state.h @ p.U.T + p.b
    i = sigmoid(z[..., 0:H])
    f = sigmoid(z[..., H : 2 * H])
    g = np.tanh(z[..., 2 * H : 3 * H])
    o = sigmoid(z[..., 3 * H : 4 * H])
    c = f * state.c + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = {
        "x": x, "h_prev": state.h, "c_prev": state.c,
        "i": i, "f": f, "g": g, "o": o, "c": c, "tanh_c": tanh_c,
    }
    return LayerState(h=h, c=c), cache


@dataclass
class _LstmSeqCache:
    """Stacked per-timestep activations of one layer over a full window."""

    X: np.ndarray       # [B, T, D]
    I: np.ndarray       # gates, each [B, T, H]
    F: np.ndarray
    G: np.ndarray
    O: np.ndarray
    C: np.ndarray       # cell states [B, T, H]
    TC: np.ndarray      # tanh(C)
    H_prev: np.ndarray  # hidden state entering each step [B, T, H]


def lstm_layer_forward(X: np.ndarray, p: LstmLayerParams) -> tuple[np.ndarray, _LstmSeqCache]:
    """Run a layer over the whole window; returns hidden sequence [B, T, H]."""
    B, T, D = X.shape
    H = p.hidden
    if D != p.W.shape[1]:
        raise ValueError(f"input width {D} != layer input width {p.W.shape[1]}")
    # All input projections in one matmul; only the recurrent term loops.
    XW = (X.reshape(B * T, D) @ p.W.T).reshape(B, T, 4 * H)
    I = np.empty((B, T, H)); F = np.empty((B, T, H))
    G = np.empty((B, T, H)); O = np.empty((B, T, H))
    C = np.empty((B, T, H)); TC = np.empty((B, T, H))
    H_prev = np.empty((B, T, H)); H_out = np.empty((B, T, H))
    h = np.zeros((B, H)); c = np.zeros((B, H))
    for t in range(T):
        z = XW[:, t] + h @ p.U.T + p.b
        i = sigmoid(z[:, 0:H])
        f = sigmoid(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = sigmoid(z[:, 3 * H : 4 * H])
        H_prev[:, t] = h
        c = f * c + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        I[:, t] = i; F[:, t] = f; G[:, t] = g; O[:, t] = o
        C[:, t] = c; TC[:, t] = tanh_c; H_out[:, t] = h
    return H_out, _LstmSeqCache(X=X, I=I, F=F, G=G, O=O, C=C, TC=TC, H_prev=H_prev)


def lstm_layer_backward(
    dH: np.ndarray, cache: _LstmSeqCache, p: LstmLayerParams
) -> tuple[np.ndarray, LstmLayerParams]:
    """BPTT through one layer.

    dH is the loss gradient w.r.t. every hidden output [B, T, H]; returns the
    gradient w.r.t. the layer input and the parameter gradients.
    """
    B, T, D = cache.X.shape
    H = p.hidden
    dZ = np.empty((B, T, 4 * H))
    dU = np.zeros_like(p.U)
    dh_next = np.zeros((B, H))
    dc = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        i, f, g, o = cache.I[:, t], cache.F[:, t], cache.G[:, t], cache.O[:, t]
        tanh_c = cache.TC[:, t]
        c_prev = cache.C[:, t - 1] if t > 0 else np.zeros((B, H))
        dh = dH[:, t] + dh_next
        do = dh * tanh_c
        dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dz = dZ[:, t]
        dz[:, 0:H] = di * i * (1.0 - i)
        dz[:, H : 2 * H] = df * f * (1.0 - f)
        dz[:, 2 * H : 3 * H] = dg * (1.0 - g * g)
        dz[:, 3 * H : 4 * H] = do * o * (1.0 - o)
        dU += dz.T @ cache.H_prev[:, t]
        dh_next = dz @ p.U
        dc = dc * f  # additive cell path carries straight to step t-1
    flat = dZ.reshape(B * T, 4 * H)
    dW = flat.T @ cache.X.reshape(B * T, D)
    db = flat.sum(axis=0)
    dX = (flat @ p.W).reshape(B, T, D)
    return dX, LstmLayerParams(W=dW, U=dU, b=db)


def dense_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map y = W x + b for single vectors or batches."""
    if x.shape[-1] != W.shape[1]:
        raise ValueError(f"input width {x.shape[-1]} != dense input width {W.shape[1]}")
    return x @ W.T + b


def dropout_apply(
    x: np.ndarray, rate: float, mode: str, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Inverted dropout: keep with probability 1-rate, scale kept by 1/(1-rate).

    Inference mode (and rate 0) passes the input through with an all-ones
    mask, so no rescaling is ever needed at prediction time.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate {rate} outside [0, 1)")
    if mode == "infer" or rate == 0.0:
        return x, np.ones_like(x)
    if mode != "train":
        raise ValueError(f"unknown mode {mode!r}")
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    keep = rng.random(x.shape) >= rate
    mask = keep / (1.0 - rate)
    return x * mask, mask


def softmax(z: np.ndarray) -> np.ndarray:
    """Stable softmax along the last axis; rejects non-finite logits."""
    if not np.isfinite(z).all():
        raise ValueError("non-finite values in softmax input")
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


_CE_CLIP = 1e-12


def cross_entropy(probs: np.ndarray, target_id: int) -> float:
    """Negative log-likelihood of the target class, clipped below 1e-12."""
    if not 0 <= target_id < probs.shape[-1]:
        raise ValueError(f"target id {target_id} outside {probs.shape[-1]} classes")
    p = probs[..., target_id]
    if p < _CE_CLIP:
        p = p + _CE_CLIP
    return float(-np.log(p))


def mean_cross_entropy(probs: np.ndarray, target_ids: np.ndarray) -> float:
    """Batch mean of the per-sample cross-entropies."""
    p = probs[np.arange(probs.shape[0]), target_ids]
    p = np.where(p < _CE_CLIP, p + _CE_CLIP, p)
    return float(-np.log(p).mean())


@dataclass
class _ForwardCache:
    mode: str
    spec: NetworkSpec
    params: NetworkParams
    lstm_caches: list[_LstmSeqCache]
    drop_masks: list[np.ndarray]     # after LSTM 1, LSTM 2, dense 1
    dense1_in: np.ndarray            # last hidden state of LSTM 3 [B, H]
    dense1_pre: np.ndarray           # dense 1 pre-activation [B, K]
    dense2_in: np.ndarray            # dense 1 output after dropout [B, K]
    probs: np.ndarray                # [B, V]


def network_forward(
    x: np.ndarray,
    params: NetworkParams,
    spec: NetworkSpec,
    mode: str = "train",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, _ForwardCache]:
    """Full stack: LSTM -> drop -> LSTM -> drop -> LSTM -> dense -> drop -> dense -> softmax.

    x is [B, window_len, 1]; returns class probabilities [B, V]. LSTM layers
    1 and 2 feed full hidden sequences upward; layer 3 contributes only its
    final hidden state.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != spec.window_len or x.shape[2] != 1:
        raise ValueError(f"input shape {x.shape} != (B, {spec.window_len}, 1)")
    rate = spec.dropout_rate

    h1, c1 = lstm_layer_forward(x, params.lstm[0])
    d1, m1 = dropout_apply(h1, rate, mode, rng)
    h2, c2 = lstm_layer_forward(d1, params.lstm[1])
    d2, m2 = dropout_apply(h2, rate, mode, rng)
    h3, c3 = lstm_layer_forward(d2, params.lstm[2])
    last = h3[:, -1]

    a1 = dense_forward(last, params.dense1.W, params.dense1.b)
    r1 = np.maximum(a1, 0.0) if spec.dense1_relu else a1
    d3, m3 = dropout_apply(r1, rate, mode, rng)
    logits = dense_forward(d3, params.dense2.W, params.dense2.b)
    probs = softmax(logits)
    cache = _ForwardCache(
        mode=mode, spec=spec, params=params,
        lstm_caches=[c1, c2, c3], drop_masks=[m1, m2, m3],
        dense1_in=last, dense1_pre=a1, dense2_in=d3, probs=probs,
    )
    return probs, cache


def network_backward(cache: _ForwardCache, target_ids) -> NetworkParams:
    """Exact gradients of the batch-mean cross-entropy w.r.t. every parameter.

    Starts from the fused softmax/cross-entropy form (probs - one_hot) and
    backpropagates through the dense stack, the saved dropout masks, and all
    window_len timesteps of the three LSTM layers.
    """
    if cache.mode != "train":
        raise StaleCacheError("backward requires a cache from a train-mode forward pass")
    params = cache.params
    probs = cache.probs
    B, V = probs.shape
    ids = np.atleast_1d(np.asarray(target_ids, dtype=np.int64))
    if ids.shape != (B,):
        raise ValueError(f"target shape {ids.shape} != ({B},)")
    if np.any(ids < 0) or np.any(ids >= V):
        raise ValueError(f"target ids outside {V} classes")

    dlogits = probs.copy()
    dlogits[np.arange(B), ids] -= 1.0
    dlogits /= B

    d2_grad = DenseParams(W=dlogits.T @ cache.dense2_in, b=dlogits.sum(axis=0))
    dd3 = dlogits @ params.dense2.W
    dr1 = dd3 * cache.drop_masks[2]
    da1 = dr1 * (cache.dense1_pre > 0) if cache.spec.dense1_relu else dr1
    d1_grad = DenseParams(W=da1.T @ cache.dense1_in, b=da1.sum(axis=0))
    dlast = da1 @ params.dense1.W

    dH3 = np.zeros_like(cache.lstm_caches[2].I)
    dH3[:, -1] = dlast
    dD2, g3 = lstm_layer_backward(dH3, cache.lstm_caches[2], params.lstm[2])
    dH2 = dD2 * cache.drop_masks[1]
    dD1, g2 = lstm_layer_backward(dH2, cache.lstm_caches[1], params.lstm[1])
    dH1 = dD1 * cache.drop_masks[0]
    _, g1 = lstm_layer_backward(dH1, cache.lstm_caches[0], params.lstm[0])
    return NetworkParams(lstm=[g1, g2, g3], dense1=d1_grad, dense2=d2_grad)


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    num_params: int


def _straight_line_loss(
    tensors: dict[str, np.ndarray], spec: NetworkSpec, x: np.ndarray, target: int
):
    """Cross-entropy of one window, recomputed step by step from the formulas.

    Independent of the batched forward path: plain per-timestep arithmetic in
    whatever dtype the tensors carry. gradient_check runs it in 80-bit floats
    so finite-difference roundoff stays far below the comparison tolerance.
    """
    H = spec.lstm_width
    seq = list(x)  # per-timestep input vectors; shape (1,) entering layer 1
    for layer in range(1, LSTM_LAYERS + 1):
        W = tensors[f"lstm{layer}.W"]
        U = tensors[f"lstm{layer}.U"]
        b = tensors[f"lstm{layer}.b"]
        h = np.zeros(H, dtype=W.dtype)
        c = np.zeros(H, dtype=W.dtype)
        outputs = []
        for t in range(spec.window_len):
            z = W @ seq[t] + U @ h + b
            i = 1.0 / (1.0 + np.exp(-z[0:H]))
            f = 1.0 / (1.0 + np.exp(-z[H : 2 * H]))
            g = np.tanh(z[2 * H : 3 * H])
            o = 1.0 / (1.0 + np.exp(-z[3 * H : 4 * H]))
            c = f * c + i * g
            h = o * np.tanh(c)
            outputs.append(h)
        seq = outputs
    a1 = tensors["dense1.W"] @ seq[-1] + tensors["dense1.b"]
    if spec.dense1_relu:
        a1 = np.maximum(a1, 0)
    logits = tensors["dense2.W"] @ a1 + tensors["dense2.b"]
    shifted = logits - logits.max()
    p = np.exp(shifted)
    return -np.log(p[target] / p.sum())


def gradient_check(
    spec_small: NetworkSpec,
    seed: int,
    delta: float = 1e-5,
    grad_transform: Callable[[NetworkParams], None] | None = None,
) -> GradCheckReport:
    """Compare analytic BPTT gradients against central finite differences.

    Runs with dropout disabled on a single random sample. The differenced
    loss is an independent straight-line evaluation in extended precision;
    in float64 the roundoff of (L+ - L-)/(2*delta) alone would swamp the
    many true gradients of magnitude ~1e-8. grad_transform may deliberately
    corrupt the analytic gradients first (mutation testing of the check
    itself). Relative error per parameter is |a - n| / max(|a|, |n|, 1e-8).
    """
    spec = replace(spec_small, dropout_rate=0.0)
    rng = np.random.default_rng(seed)
    params = init_params(spec, rng)
    x = rng.random((spec.window_len, 1))
    target = int(rng.integers(spec.vocab_size))

    probs, cache = network_forward(x[None, :, :], params, spec, mode="train")
    grads = network_backward(cache, target)
    if grad_transform is not None:
        grad_transform(grads)

    tensors = {n: t.astype(np.longdouble) for n, t in params.named_tensors()}
    x_ext = x.astype(np.longdouble)
    step = np.longdouble(delta)

    worst = ("", -1)
    max_rel = 0.0
    count = 0
    grad_map = dict(grads.named_tensors())
    for name, tensor in params.named_tensors():
        flat = tensors[name].reshape(-1)
        gflat = grad_map[name].reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            loss_hi = _straight_line_loss(tensors, spec, x_ext, target)
            flat[idx] = orig - step
            loss_lo = _straight_line_loss(tensors, spec, x_ext, target)
            flat[idx] = orig
            numeric = float((loss_hi - loss_lo) / (2 * step))
            analytic = gflat[idx]
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            if rel > max_rel:
                max_rel = rel
                worst = (name, idx)
            count += 1
    return GradCheckReport(
        max_rel_error=max_rel, worst_param=f"{worst[0]}[{worst[1]}]", num_params=count
    )
