"""At-most-one-changepoint statistics: CUSUM, interval contrasts, GLR,
seasonal F-max, and the variance-shift likelihood scan."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .series import _as_values

__all__ = [
    "AmocResult",
    "CUSUM_CRITICAL_VALUES",
    "cusum_statistics",
    "cusum_max_test",
    "wbs_contrast",
    "glr_contrast",
    "fmax_seasonal",
    "variance_shift_loglik",
    "variance_amoc",
]

# Asymptotic critical values of the scaled CUSUM maximum, i.e. quantiles of
# the supremum of the absolute Brownian bridge, by significance level.
CUSUM_CRITICAL_VALUES = {
    0.10: 1.224,
    0.05: 1.358,
    0.025: 1.480,
    0.01: 1.628,
    0.001: 1.949,
}

GLR_CAP_DEFAULT = 1e12

GLR_FAMILIES = ("mean", "linear_cont", "linear", "mean_var")

# Minimum observations per side needed to fit each family.
GLR_MIN_OBS = {"mean": 1, "linear_cont": 2, "linear": 2, "mean_var": 2}


@dataclass(frozen=True)
class AmocResult:
    statistic: float
    location: int
    threshold: float
    reject: bool


def cusum_statistics(y) -> np.ndarray:
    """Scaled CUSUM values |C_k| / (sigma_hat * sqrt(n)) for k = 2..n.

    C_k is the partial sum of the first k observations minus k times the
    overall mean; sigma_hat is the null-hypothesis standard deviation.
    """
    values = _as_values(y)
    n = values.size
    sigma2 = values.var(ddof=1)
    if sigma2 <= 0:
        raise ValueError("zero-variance series")
    partial = np.cumsum(values)
    k = np.arange(1, n + 1)
    c = partial - k * (partial[-1] / n)
    return np.abs(c[1:]) / math.sqrt(sigma2 * n)


def cusum_max_test(y, alpha: float = 0.05) -> AmocResult:
    """Maximum scaled CUSUM test against the Brownian-bridge critical value."""
    values = _as_values(y)
    if values.size < 3:
        raise ValueError("cusum_max_test requires n >= 3")
    if alpha not in CUSUM_CRITICAL_VALUES:
        raise ValueError(
            f"alpha must be one of {sorted(CUSUM_CRITICAL_VALUES)}, got {alpha}"
        )
    scaled = cusum_statistics(values)
    idx = int(np.argmax(scaled))
    stat = float(scaled[idx])
    threshold = CUSUM_CRITICAL_VALUES[alpha]
    return AmocResult(stat, idx + 2, threshold, stat > threshold)


def wbs_contrast(y, s: int, b: int, e: int) -> float:
    """Weighted difference of segment means on [s, b-1] versus [b, e].

    b is the first index of the right segment.  Equals
    sqrt(n1 * n2 / N) * (mean_left - mean_right), which is the CUSUM-type
    interval contrast maximized by WBS.
    """
    values = _as_values(y)
    n = values.size
    if not (1 <= s < b <= e <= n):
        raise ValueError(f"need 1 <= s < b <= e <= n, got ({s}, {b}, {e})")
    left = values[s - 1 : b - 1]
    right = values[b - 1 : e]
    n1, n2 = left.size, right.size
    total = n1 + n2
    w = math.sqrt(n1 * n2 / total)
    return w * (left.mean() - right.mean())


def _line_rss(values: np.ndarray, kink: int | None = None) -> float:
    """RSS of an OLS line, optionally with a slope kink after position `kink`."""
    m = values.size
    t = np.arange(1.0, m + 1.0)
    cols = [np.ones(m), t]
    if kink is not None:
        cols.append(np.maximum(t - kink, 0.0))
    design = np.column_stack(cols)
    _, res, rank, _ = np.linalg.lstsq(design, values, rcond=None)
    if rank < design.shape[1] or res.size == 0:
        fit = design @ np.linalg.lstsq(design, values, rcond=None)[0]
        return float(np.sum((values - fit) ** 2))
    return float(res[0])


def glr_contrast(y, s: int, b: int, e: int, family: str = "mean",
                 cap: float = GLR_CAP_DEFAULT) -> float:
    """Generalized likelihood ratio for a split at b within [s, e].

    Twice the log ratio of the maximized split likelihood to the pooled one,
    with the Gaussian variance profiled out.  Degenerate zero-residual splits
    return `cap` so noiseless fixtures rank instead of overflowing.
    """
    if family not in GLR_FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    values = _as_values(y)
    n = values.size
    d = GLR_MIN_OBS[family]
    if not (1 <= s < b <= e <= n):
        raise ValueError(f"need 1 <= s < b <= e <= n, got ({s}, {b}, {e})")
    if not (s + d <= b <= e - d + 1):
        raise ValueError(f"split {b} leaves fewer than {d} observations on a side")
    seg = values[s - 1 : e]
    left = values[s - 1 : b - 1]
    right = values[b - 1 : e]
    total = seg.size

    if family == "mean_var":
        sse0 = float(np.sum((seg - seg.mean()) ** 2))
        sse1 = float(np.sum((left - left.mean()) ** 2))
        sse2 = float(np.sum((right - right.mean()) ** 2))
        if sse0 <= 0.0:
            return 0.0
        if sse1 <= 0.0 or sse2 <= 0.0:
            return cap
        stat = (total * math.log(sse0 / total)
                - left.size * math.log(sse1 / left.size)
                - right.size * math.log(sse2 / right.size))
        return min(max(stat, 0.0), cap)

    if family == "mean":
        sse0 = float(np.sum((seg - seg.mean()) ** 2))
        ssea = (float(np.sum((left - left.mean()) ** 2))
                + float(np.sum((right - right.mean()) ** 2)))
    elif family == "linear":
        sse0 = _line_rss(seg)
        ssea = _line_rss(left) + _line_rss(right)
    else:  # linear_cont: one line with a slope change at b, continuous
        sse0 = _line_rss(seg)
        ssea = _line_rss(seg, kink=b - s)
    if sse0 <= 0.0:
        return 0.0
    if ssea <= 0.0:
        return cap
    return min(max(total * math.log(sse0 / ssea), 0.0), cap)


def f_quantile(q: float, dfn: int, dfd: int) -> float:
    """Quantile of the F distribution via the inverse incomplete beta."""
    return float(special.fdtri(dfn, dfd, q))


def _seasonal_design(n: int, period: int) -> np.ndarray:
    design = np.zeros((n, period))
    design[np.arange(n), np.arange(n) % period] = 1.0
    return design


def fmax_seasonal(y, period: int, alpha: float = 0.05) -> AmocResult:
    """F-max test for one mean shift in the presence of a seasonal cycle.

    For each candidate tau the alternative adds a step at tau to the
    seasonal-means model; F_tau compares SSE_0 against SSE_A(tau) with
    n - (period + 1) error degrees of freedom.
    """
    values = _as_values(y)
    n = values.size
    if period < 2:
        raise ValueError("period must be at least 2")
    if n < 2 * period + 2:
        raise ValueError("fmax_seasonal requires n >= 2 * period + 2")
    seasonal = _seasonal_design(n, period)
    beta0, _, _, _ = np.linalg.lstsq(seasonal, values, rcond=None)
    sse0 = float(np.sum((values - seasonal @ beta0) ** 2))
    error_df = n - (period + 1)

    best_f, best_tau = -np.inf, 2
    for tau in range(2, n + 1):
        step = np.zeros(n)
        step[tau - 1 :] = 1.0
        design = np.column_stack([seasonal, step])
        coef, _, _, _ = np.linalg.lstsq(design, values, rcond=None)
        sse_a = float(np.sum((values - design @ coef) ** 2))
        if sse_a <= 0.0:
            f_tau = np.inf if sse0 > 0 else 0.0
        else:
            f_tau = (sse0 - sse_a) / (sse_a / error_df)
        if f_tau > best_f:
            best_f, best_tau = f_tau, tau
    threshold = f_quantile(1.0 - alpha, 1, error_df)
    return AmocResult(float(best_f), best_tau, threshold, best_f > threshold)


def variance_shift_loglik(residuals, tau: int) -> float:
    """Split log-likelihood -(n1/2) log s1^2(tau) - (n2/2) log s2^2(tau).

    Segment variances average squared residuals over t < tau and t >= tau.
    """
    res = _as_values(residuals)
    n = res.size
    n1 = tau - 1
    n2 = n - tau + 1
    if n1 < 2 or n2 < 2:
        raise ValueError("each side of tau needs at least 2 observations")
    s1 = float(np.mean(res[: tau - 1] ** 2))
    s2 = float(np.mean(res[tau - 1 :] ** 2))
    if s1 <= 0.0 or s2 <= 0.0:
        raise ValueError("zero segment variance at tau=%d" % tau)
    return -0.5 * n1 * math.log(s1) - 0.5 * n2 * math.log(s2)


def variance_amoc(y, mu_hat) -> AmocResult:
    """Locate a single variance shift in y about a supplied mean sequence.

    The caller provides mu_hat (the mean need not be constant); the scan
    maximizes the two-segment variance log-likelihood over tau.  This is an
    estimator, not a calibrated test: the threshold is -inf.
    """
    values = _as_values(y)
    mu = _as_values(mu_hat)
    if values.shape != mu.shape:
        raise ValueError("mu_hat must match y in length")
    res = values - mu
    n = res.size
    if n < 5:
        raise ValueError("variance_amoc requires n >= 5")
    best_ll, best_tau = -np.inf, 3
    for tau in range(3, n):
        ll = variance_shift_loglik(res, tau)
        if ll > best_ll:
            best_ll, best_tau = ll, tau
    return AmocResult(float(best_ll), best_tau, -math.inf, True)
