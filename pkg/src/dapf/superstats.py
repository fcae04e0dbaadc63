"""Superstatistical analysis of price series.

Local inverse temperatures from short windows, the kurtosis-based time-scale
scan, Gaussian and q-Gaussian densities and fits, the Gamma-mixture density
computed by quadrature, and the comparison of data-driven volatility with
the model-implied volatility 1/sigma(t)^2.

Parametrization: a Gaussian with inverse temperature ``beta`` has density
sqrt(beta/pi) exp(-beta (p-mu)^2), i.e. variance 1/(2 beta). A Gamma(k, theta)
mixture over beta gives a q-Gaussian with q = 1 + 2/(2k+1) and
beta_q = theta (k + 1/2).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import integrate, optimize, stats
from scipy.special import betaln, digamma, gammaln, polygamma

from .errors import ConvergenceError, DataError, DegenerateInputError

logger = logging.getLogger(__name__)

DEFAULT_TAU = 96
TIMESCALE_GRID = (8, 12, 16, 24, 32, 48, 64, 96, 128, 192, 256, 384, 512)
Q_MAX = 3.0
MIN_VARIANCE = 1e-12


# ---------------------------------------------------------------------------
# Local statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VolatilitySeries:
    """Windowed inverse temperatures beta = 1/(2 var) and, optionally, the
    hourly model volatility nu = 1/sigma^2."""

    beta: np.ndarray
    window_start: pd.Index
    tau: int
    n_skipped: int = 0
    nu: pd.Series | None = None

    def __post_init__(self):
        if np.any(~np.isfinite(self.beta)) or np.any(self.beta <= 0):
            raise DataError("beta values must be positive and finite")
        if self.nu is not None and (np.any(~np.isfinite(self.nu)) or np.any(self.nu <= 0)):
            raise DataError("nu values must be positive and finite")

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame({"window_start": self.window_start, "beta": self.beta})


def _windows(x: np.ndarray, tau: int, overlapping: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Windows as rows of a 2-d view, and their start offsets."""
    if overlapping:
        w = np.lib.stride_tricks.sliding_window_view(x, tau)
        return w, np.arange(len(w))
    n = len(x) // tau
    return x[:n * tau].reshape(n, tau), np.arange(n) * tau


def local_volatility(x, tau: int = DEFAULT_TAU, times: pd.DatetimeIndex | None = None,
                     overlapping: bool = False) -> VolatilitySeries:
    """beta = 1/(2 s^2) per window of ``tau`` samples (s^2 with ddof=1).

    Windows with variance below 1e-12 are skipped and counted.
    """
    x = np.asarray(x, dtype=float)
    if tau < 8:
        raise DataError("tau must be at least 8")
    if len(x) < tau:
        raise DataError("series shorter than one window")
    w, starts = _windows(x, tau, overlapping)
    var = w.var(axis=1, ddof=1)
    ok = var >= MIN_VARIANCE
    n_skipped = int((~ok).sum())
    if n_skipped:
        logger.info("local_volatility: skipped %d zero-variance windows", n_skipped)
    starts = starts[ok]
    index = pd.Index(starts) if times is None else pd.DatetimeIndex(times[starts])
    return VolatilitySeries(1.0 / (2.0 * var[ok]), index, tau, n_skipped)


def lstm_volatility(forecast) -> pd.Series:
    """Model-implied volatility nu(t) = 1/sigma(t)^2, per forecast hour."""
    sigma = np.asarray(forecast.sigma, dtype=float)
    return pd.Series(1.0 / sigma**2, index=pd.DatetimeIndex(forecast.times), name="nu")


def local_kurtosis(x, window: int) -> np.ndarray:
    """m4/m2^2 (central sample moments) per non-overlapping window;
    zero-variance windows are skipped."""
    x = np.asarray(x, dtype=float)
    if window < 8:
        raise DataError("window must be at least 8")
    w, _ = _windows(x, window)
    if w.shape[0] == 0:
        return np.array([])
    d = w - w.mean(axis=1, keepdims=True)
    m2 = np.mean(d**2, axis=1)
    m4 = np.mean(d**4, axis=1)
    ok = m2 > MIN_VARIANCE
    return m4[ok] / m2[ok] ** 2


def kurtosis_scan(x, grid=TIMESCALE_GRID) -> pd.Series:
    """Mean local kurtosis for every window length of ``grid``."""
    x = np.asarray(x, dtype=float)
    out = {}
    for tau in grid:
        if tau > len(x):
            break
        k = local_kurtosis(x, tau)
        out[tau] = float(k.mean()) if k.size else math.nan
    return pd.Series(out, name="mean_kurtosis")


def estimate_timescale(x, grid=TIMESCALE_GRID) -> int:
    """Smallest window length whose mean local kurtosis reaches 3.

    Below the superstatistical time scale windows are locally Gaussian and
    the sample kurtosis sits at or below 3; above it, windows mix several
    volatility levels and turn leptokurtic. Returns the grid end (with a
    warning) if 3 is never reached.
    """
    x = np.asarray(x, dtype=float)
    if len(x) < 500:
        raise DataError("series too short for a time-scale scan (need >= 500)")
    if np.var(x) < MIN_VARIANCE:
        raise DegenerateInputError("constant series has no time scale")
    scan = kurtosis_scan(x, grid)
    hit = scan[scan >= 3.0]
    if hit.empty:
        warnings.warn("mean local kurtosis never reaches 3 on the scan grid; "
                      "returning the largest window", RuntimeWarning)
        return int(scan.index[-1])
    return int(hit.index[0])


# ---------------------------------------------------------------------------
# Gaussian and q-Gaussian densities
# ---------------------------------------------------------------------------


def gaussian_pdf(x, mu=0.0, sigma=1.0):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise DataError("sigma must be positive")
    z = (np.asarray(x, dtype=float) - mu) / sigma
    return np.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))


def fit_gaussian(sample) -> tuple[float, float]:
    """Maximum-likelihood (mean, population standard deviation)."""
    x = np.asarray(sample, dtype=float)
    if x.size < 2:
        raise DegenerateInputError("need at least two points")
    sd = float(x.std())
    if sd == 0:
        raise DegenerateInputError("sample has zero variance")
    return float(x.mean()), sd


def _check_q(q: float) -> None:
    if not (1.0 <= q < Q_MAX):
        raise DataError(f"q must lie in [1, 3), got {q}")


def qgaussian_log_norm(q: float) -> float:
    """log N_q, so that sqrt(beta)/N_q e_q(-beta x^2) integrates to one.

    For 1 < q < 3, N_q = B(1/(q-1) - 1/2, 1/2) / sqrt(q-1), the Student-t
    normalization; N_1 = sqrt(pi).
    """
    _check_q(q)
    if q == 1.0:
        return 0.5 * math.log(math.pi)
    a = 1.0 / (q - 1.0)
    return float(betaln(a - 0.5, 0.5) - 0.5 * math.log(q - 1.0))


def qgaussian_logpdf(p, q: float, beta: float, mu: float = 0.0):
    _check_q(q)
    if beta <= 0:
        raise DataError("beta must be positive")
    x2 = (np.asarray(p, dtype=float) - mu) ** 2
    if q == 1.0:
        log_e = -beta * x2
    else:
        log_e = -np.log1p((q - 1.0) * beta * x2) / (q - 1.0)
    return 0.5 * math.log(beta) - qgaussian_log_norm(q) + log_e


def qgaussian_pdf(p, q: float, beta: float, mu: float = 0.0):
    """(sqrt(beta)/N_q) e_q(-beta (p-mu)^2) with e_q(x) = [1+(1-q)x]^(1/(1-q)).

    Only the heavy-tailed branch 1 <= q < 3 is supported; there the bracket
    is always positive.
    """
    return np.exp(qgaussian_logpdf(p, q, beta, mu))


def gamma_to_qgaussian(k: float, theta: float) -> tuple[float, float]:
    """(q, beta_q) of the q-Gaussian produced by a Gamma(k, theta) mixture."""
    if k <= 0 or theta <= 0:
        raise DataError("Gamma shape and scale must be positive")
    return 1.0 + 2.0 / (2.0 * k + 1.0), theta * (k + 0.5)


def superstat_density(k: float, theta: float, p, mu: float = 0.0,
                      rtol: float = 1e-8) -> np.ndarray:
    """Gamma(k, theta)-weighted mixture of Gaussians by adaptive quadrature.

    rho(p) = int_0^inf f(beta) sqrt(beta/pi) exp(-beta (p-mu)^2) dbeta.
    """
    if k <= 0 or theta <= 0:
        raise DataError("Gamma shape and scale must be positive")
    p = np.atleast_1d(np.asarray(p, dtype=float))
    log_c = -gammaln(k) - k * math.log(theta) - 0.5 * math.log(math.pi)

    def split_points(x2):
        # the integrand is a Gamma(k + 1/2, 1/(1/theta + x2)) kernel in beta;
        # split around its bulk so narrow or shifted peaks are resolved
        rate = 1.0 / theta + x2
        centre, width = (k + 0.5) / rate, math.sqrt(k + 0.5) / rate
        cuts = {max(centre - 8 * width, 0.0), centre, centre + 8 * width, centre + 60 * width}
        return sorted(c for c in cuts if c > 0)

    def integrand(b, x2):
        if b <= 0:
            return 0.0
        return math.exp(log_c + (k - 0.5) * math.log(b) - b / theta - b * x2)

    out = np.empty_like(p)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for j, pj in enumerate(p):
            x2 = (pj - mu) ** 2
            edges = [0.0, *split_points(x2), np.inf]
            pieces = list(zip(edges[:-1], edges[1:]))
            # finite pieces first; the infinite tail only needs accuracy relative to them
            bulk, outer = pieces[:-1], pieces[-1:]
            try:
                total = sum(integrate.quad(integrand, a, b, args=(x2,), epsabs=0.0,
                                           epsrel=rtol, limit=200)[0] for a, b in bulk)
                total += sum(integrate.quad(integrand, a, b, args=(x2,), epsabs=rtol * total,
                                            epsrel=rtol, limit=200)[0] for a, b in outer)
            except integrate.IntegrationWarning as exc:
                raise ConvergenceError(f"quadrature failed at p={pj}: {exc}") from exc
            out[j] = total
    return out


# ---------------------------------------------------------------------------
# Fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QGaussianFit:
    q: float
    beta: float
    mu: float
    loglik: float
    converged: bool = True

    def pdf(self, p):
        return qgaussian_pdf(p, self.q, self.beta, self.mu)


def qgaussian_loglik(x: np.ndarray, q: float, beta: float, mu: float) -> float:
    return float(np.sum(qgaussian_logpdf(x, q, beta, mu)))


def _fit_location_scale(x: np.ndarray, q: float, start: tuple[float, float]):
    """Maximize the log-likelihood over (mu, log beta) for fixed q."""
    n = len(x)
    qm1 = q - 1.0
    log_norm = qgaussian_log_norm(q)

    def negll(theta):
        mu, u = theta
        beta = math.exp(u)
        d = x - mu
        z = beta * d * d
        if qm1 == 0.0:
            ll = 0.5 * n * u - n * log_norm - z.sum()
            g_mu = 2.0 * beta * d.sum()
            g_u = 0.5 * n - z.sum()
        else:
            w = 1.0 + qm1 * z
            ll = 0.5 * n * u - n * log_norm - np.log1p(qm1 * z).sum() / qm1
            g_mu = np.sum(2.0 * beta * d / w)
            g_u = 0.5 * n - np.sum(z / w)
        return -ll, -np.array([g_mu, g_u])

    # keep log beta in a wide but finite box so line searches cannot overflow
    bounds = [(None, None), (start[1] - 40.0, start[1] + 40.0)]
    res = optimize.minimize(negll, np.array(start), jac=True, method="L-BFGS-B", bounds=bounds)
    return res.x[0], math.exp(res.x[1]), -res.fun, bool(res.success)


def fit_qgaussian(sample, q_max: float = 2.99) -> QGaussianFit:
    """Maximum-likelihood q-Gaussian fit over (q, beta, mu), 1 <= q <= q_max.

    Bounded scalar search over q around an inner quasi-Newton fit of
    (mu, log beta). The result never has a lower likelihood than the
    Gaussian fit (the q = 1 boundary).
    """
    x = np.asarray(sample, dtype=float)
    x = x[np.isfinite(x)]
    if x.size < 100:
        raise DegenerateInputError("q-Gaussian fit needs at least 100 points")
    mu0, sd0 = fit_gaussian(x)
    gauss = QGaussianFit(1.0, 1.0 / (2.0 * sd0**2), mu0,
                         qgaussian_loglik(x, 1.0, 1.0 / (2.0 * sd0**2), mu0))

    med = float(np.median(x))
    mad = float(np.median(np.abs(x - med))) or sd0
    cache: dict[float, tuple] = {}

    def profile(q):
        # robust start: beta from the MAD so heavy tails don't shrink it
        start = (med, math.log(1.0 / (2.0 * (1.4826 * mad) ** 2)))
        r = _fit_location_scale(x, q, start)
        cache[q] = r
        return -r[2]

    res = optimize.minimize_scalar(profile, bounds=(1.0, q_max), method="bounded",
                                   options={"xatol": 1e-4})
    q_hat = float(res.x)
    mu, beta, ll, ok = cache.get(q_hat) or _fit_location_scale(x, q_hat, (med, 0.0))
    fit = QGaussianFit(q_hat, beta, float(mu), float(ll), bool(res.success and ok))
    if not fit.converged:
        logger.warning("q-Gaussian fit did not fully converge; reporting best iterate")
    return fit if fit.loglik >= gauss.loglik else gauss


def fit_gamma(sample, max_iter: int = 50, tol: float = 1e-12) -> tuple[float, float]:
    """(shape, scale) by moments, refined by Newton steps on the likelihood."""
    x = np.asarray(sample, dtype=float)
    if x.size < 10:
        raise DegenerateInputError("Gamma fit needs at least 10 points")
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise DataError("Gamma fit needs positive finite values")
    mean = float(x.mean())
    var = float(x.var())
    if var <= 0:
        raise DegenerateInputError("sample has zero variance")
    k = mean**2 / var
    s = math.log(mean) - float(np.mean(np.log(x)))
    for _ in range(max_iter):
        g = math.log(k) - digamma(k) - s
        dg = 1.0 / k - polygamma(1, k)
        k_new = k - g / dg
        if k_new <= 0:
            k_new = k / 2.0
        if abs(k_new - k) < tol * k:
            k = k_new
            break
        k = k_new
    return float(k), mean / float(k)


# ---------------------------------------------------------------------------
# Comparison with the model volatility
# ---------------------------------------------------------------------------


def log_histogram(values, edges) -> np.ndarray:
    dens, _ = np.histogram(values, bins=edges, density=True)
    return dens


def standardized_density(x, edges) -> np.ndarray:
    """Histogram density of (x - mean)/std on ``edges``."""
    x = np.asarray(x, dtype=float)
    sd = x.std()
    if sd == 0:
        raise DegenerateInputError("cannot standardize a constant series")
    dens, _ = np.histogram((x - x.mean()) / sd, bins=edges, density=True)
    return dens


@dataclass
class VolatilityComparison:
    aligned: pd.DataFrame  # window_start, beta, nu_mean, n_hours
    density: pd.DataFrame  # bin_left, bin_right, bin_center, density_beta, density_nu
    summary: dict = field(default_factory=dict)


def compare_volatilities(beta: VolatilitySeries, forecast, n_bins: int = 40) -> VolatilityComparison:
    """Put windowed beta(tau) next to the hourly model volatility nu(t).

    nu is averaged over each beta window for the overlay. Note the two
    definitions differ by a factor two: a forecast whose sigma equals a
    window's sample std gives nu = 2 beta on that window.
    """
    nu = lstm_volatility(forecast)
    starts = pd.DatetimeIndex(beta.window_start)
    ends = starts + pd.Timedelta(hours=beta.tau)
    rows = []
    t = nu.index.asi8
    for s, e, b in zip(starts.asi8, ends.asi8, beta.beta):
        lo, hi = np.searchsorted(t, [s, e])
        if hi > lo:
            rows.append((pd.Timestamp(s, tz="UTC"), b, float(nu.iloc[lo:hi].mean()), int(hi - lo)))
    if not rows:
        raise DataError("beta windows and forecast hours do not overlap")
    aligned = pd.DataFrame(rows, columns=["window_start", "beta", "nu_mean", "n_hours"])

    both = np.concatenate([beta.beta, nu.to_numpy()])
    lo, hi = both.min(), both.max()
    if hi <= lo:
        hi = lo * 1.01
    edges = np.geomspace(lo, hi * (1 + 1e-12), n_bins + 1)
    density = pd.DataFrame({
        "bin_left": edges[:-1],
        "bin_right": edges[1:],
        "bin_center": np.sqrt(edges[:-1] * edges[1:]),
        "density_beta": log_histogram(beta.beta, edges),
        "density_nu": log_histogram(nu.to_numpy(), edges),
    })

    spearman = None
    if aligned["beta"].nunique() > 1 and aligned["nu_mean"].nunique() > 1 and len(aligned) > 2:
        spearman = float(stats.spearmanr(aligned["beta"], aligned["nu_mean"]).statistic)
    summary = {
        "n_windows": int(len(aligned)),
        "median_beta": float(np.median(beta.beta)),
        "median_nu": float(np.median(nu)),
        "median_ratio_nu_over_beta": float(np.median(aligned["nu_mean"] / aligned["beta"])),
        "spearman_beta_nu": spearman,
        "note": "beta = 1/(2 var) while nu = 1/sigma^2; equal local variances give nu = 2 beta",
    }
    if spearman is None:
        summary["spearman_status"] = "not applicable (constant series)"
    return VolatilityComparison(aligned, density, summary)
