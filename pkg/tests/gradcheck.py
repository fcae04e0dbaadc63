"""Central finite-difference check of the analytic LSTM gradients.

The model and its analytic gradients run in float64. The finite-difference
side evaluates the same loss in extended precision (``np.longdouble``) so
that float64 round-off in the loss, amplified by 1/eps, does not swamp
small gradient entries.
"""

from __future__ import annotations

import numpy as np

from dapf.neural import LstmConfig, backward, forward_batch, init_model


def random_case(rng: np.random.Generator):
    width = int(rng.integers(1, 9))
    depth = int(rng.integers(1, 3))
    steps = int(rng.integers(3, 11))
    n_in = int(rng.integers(1, 6))
    batch = int(rng.integers(1, 5))
    dropout = float(rng.choice([0.0, 0.2]))
    cfg = LstmConfig(depth=depth, width=width, dropout=dropout, seq_len=steps)
    model = init_model(n_in, cfg, rng)
    # move biases off their init so every gate gets exercised
    for layer in model.layers:
        layer.b += rng.normal(0, 0.3, layer.b.shape)
    model.head_b += rng.normal(0, 0.3, 2)
    X = rng.normal(0, 1, (batch, steps, n_in))
    y = rng.normal(0, 1, batch)
    return model, X, y


def max_relative_error(model, X, y, eps: float = 1e-5, mask_seed: int = 123,
                       floor: float = 1e-8, fd_dtype=np.longdouble) -> float:
    """Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over
    every parameter entry. Dropout masks are held fixed via ``mask_seed``;
    ``fd_dtype`` is the precision of the finite-difference loss."""

    ld = fd_dtype
    X_ld, y_ld = X.astype(ld), y.astype(ld)

    def loss():
        m = model.astype(ld)
        mu, sigma, _ = forward_batch(m, X_ld, train=True, rng=np.random.default_rng(mask_seed),
                                     keep_cache=False)
        return np.mean(0.5 * np.log(2 * ld(np.pi) * sigma**2) + (y_ld - mu) ** 2 / (2 * sigma**2))

    _, _, cache = forward_batch(model, X, train=True, rng=np.random.default_rng(mask_seed))
    grads = backward(model, cache, y)
    worst = 0.0
    for p, g in zip(model.params(), grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + eps
            up = loss()
            flat[k] = old - eps
            down = loss()
            flat[k] = old
            num = float((up - down) / (2 * ld(eps)))
            err = abs(gflat[k] - num) / max(abs(gflat[k]), abs(num), floor)
            worst = max(worst, err)
    return worst
