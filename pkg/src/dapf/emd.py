"""Empirical mode decomposition and slow-mode detrending.

Sifting uses natural cubic-spline envelopes through the local extrema, with
the nearest extrema mirrored about both ends of the series to tame end
effects. An IMF is accepted when the normalized squared change between
successive sifts drops below ``sd_threshold`` and its numbers of extrema
and zero crossings differ by at most one (or after ``max_sifts`` sifts).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.interpolate import CubicSpline

from .errors import DataError

SD_THRESHOLD = 0.2
MAX_SIFTS = 50
MAX_IMFS = 12
N_MIRROR = 2


@dataclass(frozen=True)
class ImfDecomposition:
    imfs: list[np.ndarray]  # fastest first
    residual: np.ndarray
    source_length: int

    @property
    def n_imfs(self) -> int:
        return len(self.imfs)

    def reconstruct(self) -> np.ndarray:
        out = self.residual.copy()
        for imf in self.imfs:
            out += imf
        return out

    def to_dataframe(self) -> pd.DataFrame:
        data = {"t": np.arange(self.source_length)}
        for k, imf in enumerate(self.imfs, start=1):
            data[f"imf{k}"] = imf
        data["residual"] = self.residual
        return pd.DataFrame(data)


def find_extrema(x: np.ndarray, tol: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Indices of interior local maxima and minima.

    A flat top/bottom is reported once, at its first sample. Steps no larger
    than ``tol`` count as flat.
    """
    d = np.diff(x)
    s = np.sign(d)
    if tol > 0:
        s[np.abs(d) <= tol] = 0
    nz = np.flatnonzero(s)
    if nz.size == 0:
        return np.array([], dtype=int), np.array([], dtype=int)
    # slope sign at each step, flat steps inherit the sign of the next change
    fill = np.searchsorted(nz, np.arange(len(s)), side="left")
    fill = np.minimum(fill, len(nz) - 1)
    s_next = s[nz[fill]]
    prev = s[:-1]
    nxt = s_next[1:]
    maxima = np.flatnonzero((prev > 0) & (nxt < 0)) + 1
    minima = np.flatnonzero((prev < 0) & (nxt > 0)) + 1
    return maxima, minima


def count_zero_crossings(x: np.ndarray) -> int:
    s = np.sign(x)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def _mirror(x: np.ndarray, idx: np.ndarray, is_max: bool) -> tuple[np.ndarray, np.ndarray]:
    """Knots (times, values) for one envelope, with mirrored end points."""
    n = len(x)
    t = idx.astype(float)
    v = x[idx]
    better = np.greater if is_max else np.less

    left_t, left_v = -t[:N_MIRROR][::-1], v[:N_MIRROR][::-1]
    right_t, right_v = 2 * (n - 1) - t[-N_MIRROR:][::-1], v[-N_MIRROR:][::-1]
    # an end sample beyond the nearest extremum bounds the envelope itself
    if better(x[0], v[0]):
        t, v = np.concatenate([[0.0], t]), np.concatenate([[x[0]], v])
    if better(x[-1], v[-1]):
        t, v = np.concatenate([t, [n - 1.0]]), np.concatenate([v, [x[-1]]])
    return (np.concatenate([left_t, t, right_t]), np.concatenate([left_v, v, right_v]))


def envelopes(x: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    """Upper and lower spline envelopes, or None if there is no maximum or
    no minimum to build them from."""
    maxima, minima = find_extrema(x)
    if maxima.size == 0 or minima.size == 0:
        return None
    grid = np.arange(len(x), dtype=float)
    out = []
    for idx, is_max in ((maxima, True), (minima, False)):
        tk, vk = _mirror(x, idx, is_max)
        order = np.argsort(tk, kind="stable")
        tk, vk = tk[order], vk[order]
        keep = np.concatenate([[True], np.diff(tk) > 0])
        out.append(CubicSpline(tk[keep], vk[keep], bc_type="natural")(grid))
    return out[0], out[1]


def is_imf_like(h: np.ndarray) -> bool:
    maxima, minima = find_extrema(h)
    return abs(maxima.size + minima.size - count_zero_crossings(h)) <= 1


def sift(x: np.ndarray, sd_threshold: float = SD_THRESHOLD,
         max_sifts: int = MAX_SIFTS) -> np.ndarray | None:
    """Extract one IMF from ``x``; None if ``x`` has no oscillation left."""
    h = x
    for k in range(max_sifts):
        env = envelopes(h)
        if env is None:
            return None if k == 0 else h
        h_new = h - 0.5 * (env[0] + env[1])
        denom = np.sum(h * h)
        sd = np.sum((h - h_new) ** 2) / denom if denom > 0 else 0.0
        h = h_new
        if sd < sd_threshold and is_imf_like(h):
            break
    return h


def decompose(x, sd_threshold: float = SD_THRESHOLD, max_sifts: int = MAX_SIFTS,
              max_imfs: int = MAX_IMFS) -> ImfDecomposition:
    """Split ``x`` into IMFs (fastest first) and a residual trend."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) < 8:
        raise DataError("EMD needs a 1-d series of length >= 8")
    if not np.all(np.isfinite(x)):
        raise DataError("EMD input must be finite")

    imfs: list[np.ndarray] = []
    # sift the centered series so a constant offset only lands in the residual
    offset = float(np.mean(x))
    residual = x - offset
    tol = flat_tolerance(x)
    while len(imfs) < max_imfs:
        maxima, minima = find_extrema(residual, tol)
        if maxima.size + minima.size < 2:
            break
        imf = sift(residual, sd_threshold, max_sifts)
        if imf is None or np.max(np.abs(imf)) <= tol:
            break
        imfs.append(imf)
        residual = residual - imf
    final = x.copy()
    for imf in imfs:
        final -= imf
    return ImfDecomposition(imfs, final, len(x))


def flat_tolerance(x: np.ndarray) -> float:
    """Variation below this is round-off, not oscillation."""
    return 1e-12 * float(np.ptp(x)) if len(x) else 0.0


def split_trend(x, n_slow: int = 5, include_residual: bool = True,
                decomposition: ImfDecomposition | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(detrended, removed)`` with ``detrended + removed == x``.

    ``removed`` is the residual (unless ``include_residual`` is False) plus
    the ``n_slow`` slowest IMFs, or all IMFs if there are fewer.
    """
    x = np.asarray(x, dtype=float)
    dec = decompose(x) if decomposition is None else decomposition
    removed = dec.residual.copy() if include_residual else np.zeros_like(x)
    if n_slow > 0:
        for imf in dec.imfs[-n_slow:]:
            removed += imf
    return x - removed, removed


def detrend(x, n_slow: int = 5, include_residual: bool = True) -> np.ndarray:
    """``x`` minus its slowest EMD components."""
    return split_trend(x, n_slow, include_residual)[0]
