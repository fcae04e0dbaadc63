"""Stacked LSTM with a two-output Gaussian head, written against numpy.

Shapes use B = batch, T = time steps, D = layer input width, H = hidden width.
Gate blocks inside the ``4H`` axis are ordered input, forget, candidate, output.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import expit

from ..dataset import NormalizationSpec
from ..errors import DataError, NonFiniteError



@dataclass(frozen=True)
class LstmConfig:
    depth: int = 2
    width: int = 32
    dropout: float = 0.2
    learning_rate: float = 1e-3
    patience: int = 200
    max_epochs: int = 2000
    batch_size: int = 64
    sigma_floor: float = 0.01
    seq_len: int = 96
    dtype: str = "float64"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LstmConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)

    def with_(self, **kw) -> "LstmConfig":
        return replace(self, **kw)


@dataclass
class LstmLayer:
    Wx: np.ndarray  # [D, 4H]
    Wh: np.ndarray  # [H, 4H]
    b: np.ndarray  # [4H]

    @property
    def width(self) -> int:
        return self.Wh.shape[0]


@dataclass
class LstmModel:
    layers: list[LstmLayer]
    head_W: np.ndarray  # [H, 2]
    head_b: np.ndarray  # [2]
    config: LstmConfig = field(default_factory=LstmConfig)
    norm: NormalizationSpec | None = None

    def __post_init__(self):
        if self.head_W.shape[1] != 2 or self.head_b.shape != (2,):
            raise DataError("head must produce exactly two outputs (mu, sigma)")

    @property
    def n_inputs(self) -> int:
        return self.layers[0].Wx.shape[0]

    def params(self) -> list[np.ndarray]:
        """Flat, ordered list of parameter arrays (shared, not copied)."""
        out = []
        for layer in self.layers:
            out += [layer.Wx, layer.Wh, layer.b]
        return out + [self.head_W, self.head_b]

    def param_names(self) -> list[str]:
        names = []
        for i in range(len(self.layers)):
            names += [f"layer{i}.Wx", f"layer{i}.Wh", f"layer{i}.b"]
        return names + ["head.W", "head.b"]

    def copy(self) -> "LstmModel":
        layers = [LstmLayer(l.Wx.copy(), l.Wh.copy(), l.b.copy()) for l in self.layers]
        return LstmModel(layers, self.head_W.copy(), self.head_b.copy(), self.config, self.norm)

    def astype(self, dtype) -> "LstmModel":
        layers = [LstmLayer(l.Wx.astype(dtype), l.Wh.astype(dtype), l.b.astype(dtype))
                  for l in self.layers]
        return LstmModel(layers, self.head_W.astype(dtype), self.head_b.astype(dtype),
                         self.config, self.norm)

    def is_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params())


def init_model(n_inputs: int, config: LstmConfig = LstmConfig(),
               rng: np.random.Generator | None = None,
               norm: NormalizationSpec | None = None) -> LstmModel:
    """Uniform(+-1/sqrt(width)) weights, forget-gate bias 1, other biases 0."""
    rng = np.random.default_rng() if rng is None else rng
    H = config.width
    bound = 1.0 / np.sqrt(H)
    layers = []
    d_in = n_inputs
    for _ in range(config.depth):
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0
        layers.append(LstmLayer(rng.uniform(-bound, bound, (d_in, 4 * H)),
                                rng.uniform(-bound, bound, (H, 4 * H)), b))
        d_in = H
    head_W = rng.uniform(-bound, bound, (H, 2))
    model = LstmModel(layers, head_W, np.zeros(2), config, norm)
    return model.astype(np.dtype(config.dtype))


def zero_model(n_inputs: int, config: LstmConfig = LstmConfig(),
               norm: NormalizationSpec | None = None) -> LstmModel:
    H = config.width
    layers = []
    d_in = n_inputs
    for _ in range(config.depth):
        layers.append(LstmLayer(np.zeros((d_in, 4 * H)), np.zeros((H, 4 * H)), np.zeros(4 * H)))
        d_in = H
    return LstmModel(layers, np.zeros((H, 2)), np.zeros(2), config, norm)


def softplus(x):
    return np.logaddexp(0.0, x)


@dataclass
class ForwardCache:
    """Activations of a cached forward pass, stored time-major."""

    inputs: list[np.ndarray]  # per-layer input sequence [T, B, D]
    gates: list[np.ndarray]  # per-layer activated gates [T, B, 4H]
    cells: list[np.ndarray]  # per-layer cell states [T+1, B, H], index 0 = initial
    tanh_cells: list[np.ndarray]  # [T, B, H]
    hidden: list[np.ndarray]  # per-layer hidden states [T+1, B, H]
    masks: list[np.ndarray | None]  # per-layer inverted-dropout masks [T, B, H]
    last: np.ndarray  # head input [B, H]
    raw: np.ndarray  # head output [B, 2]


def _gate_affine(H: int, dtype):
    """Constants turning tanh(scale * a) into (sigmoid, sigmoid, tanh, sigmoid)."""
    scale = np.full(4 * H, 0.5, dtype=dtype)
    scale[2 * H:3 * H] = 1.0
    shift = np.full(4 * H, 0.5, dtype=dtype)
    shift[2 * H:3 * H] = 0.0
    return scale, scale.copy(), shift


def _layer_forward(layer: LstmLayer, X: np.ndarray):
    """Run one layer over a time-major input ``[T, B, D]``."""
    T, B, _ = X.shape
    H = layer.width
    dt = X.dtype
    scale, mul, shift = _gate_affine(H, dt)
    gates = X @ layer.Wx
    gates += layer.b
    cs = np.zeros((T + 1, B, H), dtype=dt)
    tcs = np.empty((T, B, H), dtype=dt)
    hs = np.zeros((T + 1, B, H), dtype=dt)
    tmp = np.empty((B, H), dtype=dt)
    for t in range(T):
        a = gates[t]
        a += hs[t] @ layer.Wh
        a *= scale
        np.tanh(a, out=a)
        a *= mul
        a += shift
        # a now holds (i, f, g, o)
        c = cs[t + 1]
        np.multiply(a[:, H:2 * H], cs[t], out=c)
        np.multiply(a[:, :H], a[:, 2 * H:3 * H], out=tmp)
        c += tmp
        np.tanh(c, out=tcs[t])
        np.multiply(a[:, 3 * H:], tcs[t], out=hs[t + 1])
    return hs, gates, cs, tcs


def forward_batch(model: LstmModel, X: np.ndarray, train: bool = False,
                  rng: np.random.Generator | None = None, keep_cache: bool | None = None):
    """Batched forward pass over batch-major inputs ``[B, T, F]``.

    Returns normalized ``(mu, sigma, cache)``; ``cache`` is None unless
    ``keep_cache`` (default: same as ``train``).
    """
    keep_cache = train if keep_cache is None else keep_cache
    dt = model.head_W.dtype
    X = np.asarray(X)
    if X.ndim != 3 or X.shape[2] != model.n_inputs:
        raise DataError(f"expected inputs [B, T, {model.n_inputs}], got {X.shape}")
    p = model.config.dropout
    if train and p > 0 and rng is None:
        raise ValueError("train mode with dropout needs a random generator")

    cache = ForwardCache([], [], [], [], [], [], None, None)
    seq = np.ascontiguousarray(X.transpose(1, 0, 2), dtype=dt)
    for li, layer in enumerate(model.layers):
        hs, gates, cs, tcs = _layer_forward(layer, seq)
        out = hs[1:]
        if not np.isfinite(out[-1]).all() or not np.isfinite(cs[-1]).all():
            bad = np.argwhere(~np.isfinite(out).all(axis=(1, 2)))
            step = int(bad[0, 0]) if len(bad) else len(out) - 1
            raise NonFiniteError(f"non-finite activation in layer {li} at time step {step}")
        mask = None
        if train and p > 0:
            rdt = dt if dt in (np.float32, np.float64) else np.float64
            mask = (rng.random(out.shape, dtype=rdt) >= p).astype(dt)
            mask *= dt.type(1.0 / (1.0 - p))
            out = out * mask
        if keep_cache:
            cache.inputs.append(seq)
            cache.gates.append(gates)
            cache.cells.append(cs)
            cache.tanh_cells.append(tcs)
            cache.hidden.append(hs)
            cache.masks.append(mask)
        seq = out

    last = seq[-1]
    raw = last @ model.head_W + model.head_b
    mu = raw[:, 0]
    sigma = softplus(raw[:, 1]) + model.config.sigma_floor
    if keep_cache:
        cache.last = last
        cache.raw = raw
        return mu, sigma, cache
    return mu, sigma, None


def lstm_forward(model: LstmModel, inputs: np.ndarray, mode: str = "eval",
                 rng: np.random.Generator | None = None):
    """Single-window forward: ``inputs`` is ``[T, F]``.

    Returns ``(mu_norm, sigma_norm, cache)``.
    """
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    mu, sigma, cache = forward_batch(model, np.asarray(inputs)[None], train=mode == "train",
                                     rng=rng, keep_cache=True)
    return float(mu[0]), float(sigma[0]), cache


def nll_loss(targets, mu, sigma) -> float:
    """Mean Gaussian negative log-likelihood."""
    y, mu, sigma = (np.asarray(a, dtype=float) for a in (targets, mu, sigma))
    if not (y.shape == mu.shape == sigma.shape) or y.size == 0:
        raise DataError("targets, mu and sigma must be non-empty and equally long")
    if np.any(sigma <= 0):
        raise DataError("sigma must be positive")
    return float(np.mean(0.5 * np.log(2.0 * np.pi * sigma**2) + (y - mu) ** 2 / (2.0 * sigma**2)))


def backward(model: LstmModel, cache: ForwardCache, targets) -> list[np.ndarray]:
    """Gradients of the mean NLL w.r.t. ``model.params()`` (same order).

    Full backpropagation through time over every step of the window.
    """
    if len(cache.gates) != len(model.layers) or cache.last is None:
        raise DataError("cache does not belong to a cached forward pass of this model")
    raw = cache.raw
    dt = raw.dtype
    y = np.asarray(targets, dtype=dt)
    B = raw.shape[0]
    if y.shape != (B,):
        raise DataError("targets must match the batch size of the cache")

    mu = raw[:, 0]
    sigma = softplus(raw[:, 1]) + model.config.sigma_floor
    r = y - mu
    dmu = -r / sigma**2 / B
    dsigma = (1.0 / sigma - r**2 / sigma**3) / B
    draw = np.stack([dmu, dsigma * expit(raw[:, 1])], axis=1).astype(dt)

    d_head_W = cache.last.T @ draw
    d_head_b = draw.sum(axis=0)
    d_last = draw @ model.head_W.T

    grads: list[np.ndarray] = []
    dseq = None  # gradient w.r.t. the post-dropout output of the current layer
    for li in reversed(range(len(model.layers))):
        layer = model.layers[li]
        G = cache.gates[li]
        cs = cache.cells[li]
        tcs = cache.tanh_cells[li]
        hs = cache.hidden[li]
        X = cache.inputs[li]
        T, Bq, H4 = G.shape
        H = H4 // 4
        if layer.Wh.shape != (H, H4) or X.shape[2] != layer.Wx.shape[0] or Bq != B:
            raise DataError(f"cache shapes do not match layer {li}")

        if dseq is None:
            dout = np.zeros((T, B, H), dtype=dt)
            dout[-1] = d_last
        else:
            dout = dseq
        if cache.masks[li] is not None:
            dout *= cache.masks[li]

        dA = np.empty_like(G)
        dh = np.empty((B, H), dtype=dt)
        dc = np.zeros((B, H), dtype=dt)
        tmp = np.empty((B, H), dtype=dt)
        dh_rec = np.zeros((B, H), dtype=dt)
        WhT = np.ascontiguousarray(layer.Wh.T)
        for t in range(T - 1, -1, -1):
            a = G[t]
            i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
            tc = tcs[t]
            d = dA[t]
            di, df, dg, do = d[:, :H], d[:, H:2 * H], d[:, 2 * H:3 * H], d[:, 3 * H:]
            np.add(dout[t], dh_rec, out=dh)
            # output gate
            np.multiply(o, 1.0 - o, out=do)
            do *= tc
            do *= dh
            # cell: dc += dh * o * (1 - tc^2)
            np.multiply(tc, tc, out=tmp)
            np.subtract(1.0, tmp, out=tmp)
            tmp *= o
            tmp *= dh
            dc += tmp
            np.multiply(i, 1.0 - i, out=di)
            di *= g
            di *= dc
            np.multiply(f, 1.0 - f, out=df)
            df *= cs[t]
            df *= dc
            np.multiply(g, g, out=dg)
            np.subtract(1.0, dg, out=dg)
            dg *= i
            dg *= dc
            dc *= f
            np.matmul(d, WhT, out=dh_rec)

        dA2 = dA.reshape(-1, H4)
        dWx = X.reshape(-1, X.shape[2]).T @ dA2
        dWh = hs[:-1].reshape(-1, H).T @ dA2
        db = dA2.sum(axis=0)
        grads = [dWx, dWh, db] + grads
        if li > 0:
            dseq = dA @ layer.Wx.T
    return grads + [d_head_W, d_head_b]
