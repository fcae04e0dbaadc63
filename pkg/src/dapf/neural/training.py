"""Fold training with early stopping, and probabilistic prediction."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..dataset import TimeSeriesFrame, WindowSet, make_windows
from ..errors import DataError, DivergenceError, NonFiniteError, SchemaError
from ..dataset import NormalizationSpec
from .adam import AdamState, adam_step
from .lstm import LstmConfig, LstmModel, backward, forward_batch, init_model, nll_loss

logger = logging.getLogger(__name__)

EVAL_CHUNK = 1024


@dataclass
class TrainingLog:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_nll: float = math.inf
    stop_reason: str = ""

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "best_epoch": self.best_epoch,
                "best_val_nll": self.best_val_nll, "stop_reason": self.stop_reason}


@dataclass(frozen=True)
class ForecastDistribution:
    """Per-hour Gaussian forecast in price units (EUR/MWh)."""

    times: pd.DatetimeIndex
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", pd.DatetimeIndex(self.times))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=float))
        if not (len(self.times) == len(self.mu) == len(self.sigma)):
            raise DataError("times, mu and sigma must have equal lengths")
        if np.any(self.sigma <= 0):
            raise DataError("sigma must be positive")

    def __len__(self) -> int:
        return len(self.times)

    @classmethod
    def concat(cls, parts) -> "ForecastDistribution":
        parts = list(parts)
        if not parts:
            return cls(pd.DatetimeIndex([], tz="UTC"), np.array([]), np.array([]))
        times = parts[0].times.append([p.times for p in parts[1:]])
        return cls(times, np.concatenate([p.mu for p in parts]),
                   np.concatenate([p.sigma for p in parts]))


def fold_seed(global_seed: int, fold_index: int) -> int:
    """Independent per-fold seed derived from ``(global_seed, fold_index)``."""
    return int(np.random.SeedSequence([int(global_seed), int(fold_index)]).generate_state(1)[0])


def predict_windows(model: LstmModel, windows: WindowSet) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode forward over all windows; normalized ``(mu, sigma)``."""
    n = len(windows)
    mu = np.empty(n)
    sigma = np.empty(n)
    for s in range(0, n, EVAL_CHUNK):
        idx = np.arange(s, min(n, s + EVAL_CHUNK))
        m, sg, _ = forward_batch(model, windows.inputs(idx), train=False)
        mu[idx] = m
        sigma[idx] = sg
    return mu, sigma


def evaluate_nll(model: LstmModel, windows: WindowSet) -> float:
    mu, sigma = predict_windows(model, windows)
    return nll_loss(windows.targets, mu, sigma)


def train_fold(train: WindowSet, val: WindowSet, config: LstmConfig = LstmConfig(),
               seed: int = 0, norm: NormalizationSpec | None = None,
               model: LstmModel | None = None) -> tuple[LstmModel, TrainingLog]:
    """Train a fresh model on ``train``, early-stopping on validation NLL.

    Epoch 0 in the log is the untrained model. The returned model is the
    snapshot with the lowest validation NLL; training stops after
    ``config.patience`` epochs without improvement (or ``max_epochs``).
    """
    if len(train) == 0 or len(val) == 0:
        raise DataError("train and validation sets must be non-empty")
    rng = np.random.default_rng(seed)
    if model is None:
        model = init_model(train.n_features, config, rng, norm)
    dtype = np.dtype(config.dtype)
    params = model.params()
    state = AdamState.zeros_like(params)
    targets = train.targets.astype(dtype)
    log = TrainingLog()

    def validate(epoch: int, train_loss: float) -> float:
        try:
            v = evaluate_nll(model, val)
        except NonFiniteError:
            v = math.nan
        log.epochs.append({"epoch": epoch, "train_loss": train_loss, "val_nll": v})
        if not math.isfinite(v):
            log.stop_reason = "diverged"
            raise DivergenceError(f"validation NLL non-finite at epoch {epoch}")
        return v

    best = model.copy()
    log.best_val_nll = validate(0, math.nan)
    wait = 0
    n = len(train)
    bs = config.batch_size
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, bs):
            idx = order[s:s + bs]
            try:
                mu, sigma, cache = forward_batch(model, train.inputs(idx), train=True, rng=rng)
                y = targets[idx]
                total += nll_loss(y, mu, sigma) * len(idx)
                grads = backward(model, cache, y)
                adam_step(params, grads, state, lr=config.learning_rate)
            except NonFiniteError as exc:
                log.stop_reason = "diverged"
                raise DivergenceError(f"epoch {epoch}: {exc}") from exc
        v = validate(epoch, total / n)
        if v < log.best_val_nll:
            log.best_val_nll = v
            log.best_epoch = epoch
            best = model.copy()
            wait = 0
        else:
            wait += 1
            if wait >= max(config.patience, 1):
                log.stop_reason = f"no improvement for {wait} epochs"
                break
        logger.debug("epoch %d train %.5f val %.5f", epoch, total / n, v)
    else:
        log.stop_reason = "max_epochs"
    best.norm = norm if norm is not None else best.norm
    return best, log


def predict(model: LstmModel, frame: TimeSeriesFrame, rng_range) -> ForecastDistribution:
    """Forecast every hour of ``rng_range`` that has a complete input window."""
    norm = model.norm
    if norm is None:
        raise DataError("model carries no normalization; was it trained?")
    if tuple(norm.columns) != frame.columns:
        raise SchemaError("model normalization columns do not match the frame columns")
    windows = make_windows(frame, norm, rng_range, model.config.seq_len)
    if len(windows) == 0:
        return ForecastDistribution.concat([])
    mu, sigma = predict_windows(model, windows)
    return ForecastDistribution(windows.times, norm.denormalize_target(mu),
                                norm.denormalize_target(sigma))
