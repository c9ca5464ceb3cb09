"""Recursive multi-changepoint detectors: binary segmentation, wild binary
segmentation, narrowest-over-threshold, and two-phase wild contrast
maximization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .amoc import GLR_MIN_OBS, glr_contrast
from .series import PrefixSums, _as_values, piecewise_mean_fit

__all__ = [
    "DetectionConfig",
    "IntervalSet",
    "mad_sigma",
    "default_threshold",
    "binary_segmentation",
    "wild_binary_segmentation",
    "narrowest_over_threshold",
    "wcm",
]


@dataclass
class DetectionConfig:
    """Shared knobs for the recursive detectors.

    threshold "auto" means sigma_mad * sqrt(2 log n).  M is the random
    interval count; min_segment the smallest admissible segment length;
    max_changepoints bounds WCM's phase-2 model count.
    """

    threshold: float | str = "auto"
    M: int = 1000
    min_segment: int = 1
    max_changepoints: int = 10
    seed: int = 0


@dataclass(frozen=True)
class IntervalSet:
    """Random subintervals (s_m, e_m) drawn for WBS/NOT style detectors."""

    intervals: tuple
    seed: int
    min_length: int

    def __post_init__(self):
        for s, e in self.intervals:
            if not (s < e and e - s > self.min_length):
                raise ValueError(f"bad interval ({s}, {e})")


def draw_intervals(n: int, M: int, min_length: int, seed: int) -> IntervalSet:
    """Sample M intervals with endpoints uniform on 1..n, with replacement.

    Pairs violating s < e or e - s > min_length are rejected and redrawn,
    capped at 50 * M attempts.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    out = []
    attempts = 0
    while len(out) < M and attempts < 50 * M:
        s, e = rng.integers(1, n + 1, size=2)
        attempts += 1
        if s > e:
            s, e = e, s
        if s < e and e - s > min_length:
            out.append((int(s), int(e)))
    return IntervalSet(tuple(out), seed, min_length)


def mad_sigma(y) -> float:
    """Noise scale from the median absolute deviation of first differences.

    Differencing removes piecewise-constant signal; the 0.6745 and sqrt(2)
    factors calibrate the MAD to the Gaussian standard deviation.
    """
    values = _as_values(y)
    d = np.diff(values)
    if d.size == 0:
        return 0.0
    return float(np.median(np.abs(d - np.median(d))) / (0.6744897501960817 * math.sqrt(2.0)))


def default_threshold(y) -> float:
    values = _as_values(y)
    return mad_sigma(values) * math.sqrt(2.0 * math.log(values.size))


def _resolve_threshold(y, cfg: DetectionConfig) -> float:
    if cfg.threshold == "auto":
        return default_threshold(y)
    return float(cfg.threshold)


def _contrast_scan(ps: PrefixSums, s: int, e: int, min_seg: int) -> tuple[int, float]:
    """Argmax over b of |contrast| on [s, e]; returns (b, |contrast|).

    b ranges so both sides have at least min_seg observations.  Ties break
    toward the smallest b.
    """
    lo = s + min_seg
    hi = e - min_seg + 1
    if lo > hi:
        return -1, -np.inf
    b = np.arange(lo, hi + 1)
    n1 = b - s
    n2 = e - b + 1
    total = e - s + 1
    sum_left = ps.s[b - 1] - ps.s[s - 1]
    mean_left = sum_left / n1
    mean_right = (ps.s[e] - ps.s[b - 1]) / n2
    c = np.sqrt(n1 * n2 / total) * (mean_left - mean_right)
    idx = int(np.argmax(np.abs(c)))
    return int(b[idx]), float(abs(c[idx]))


def binary_segmentation(y, cfg: DetectionConfig | None = None,
                        trace: list | None = None) -> list[int]:
    """Recursive CUSUM splitting: split at the max |contrast| above threshold."""
    values = _as_values(y)
    cfg = cfg or DetectionConfig()
    if values.size < 3:
        raise ValueError("binary_segmentation requires n >= 3")
    zeta = _resolve_threshold(values, cfg)
    ps = PrefixSums(values)
    found: list[int] = []

    def recurse(s: int, e: int):
        if e - s + 1 < 2 * cfg.min_segment:
            return
        b, stat = _contrast_scan(ps, s, e, cfg.min_segment)
        if b < 0 or stat <= zeta:
            return
        found.append(b)
        if trace is not None:
            trace.append(("split", s, b, e, stat))
        recurse(s, b - 1)
        recurse(b, e)

    recurse(1, values.size)
    return sorted(found)


def wild_binary_segmentation(y, cfg: DetectionConfig | None = None,
                             trace: list | None = None) -> list[int]:
    """WBS: strongest contrast over random intervals, recursively.

    Candidate intervals must lie fully inside the current segment and are
    augmented with the segment itself, so M = 0 degenerates to plain BS.
    """
    values = _as_values(y)
    cfg = cfg or DetectionConfig()
    if values.size < 3:
        raise ValueError("wild_binary_segmentation requires n >= 3")
    n = values.size
    zeta = _resolve_threshold(values, cfg)
    ps = PrefixSums(values)
    intervals = draw_intervals(n, cfg.M, cfg.min_segment, cfg.seed).intervals
    found: list[int] = []

    def recurse(s: int, e: int):
        if e - s + 1 < 2 * cfg.min_segment:
            return
        best_b, best_stat = _contrast_scan(ps, s, e, cfg.min_segment)
        for (si, ei) in intervals:
            if si < s or ei > e:
                continue
            b, stat = _contrast_scan(ps, si, ei, cfg.min_segment)
            if stat > best_stat:
                best_b, best_stat = b, stat
        if best_b < 0 or best_stat <= zeta:
            return
        found.append(best_b)
        if trace is not None:
            trace.append(("split", s, best_b, e, best_stat))
        recurse(s, best_b - 1)
        recurse(best_b, e)

    recurse(1, n)
    return sorted(found)


def _not_contrast_scan(values, ps, s, e, family, min_seg):
    """Best split and contrast for NOT on [s, e] under the given family.

    The mean family uses the CUSUM contrast directly; the other families
    use sqrt(GLR) so the sqrt(2 log n)-type threshold applies on a common
    scale.
    """
    d = max(GLR_MIN_OBS[family], min_seg)
    if family == "mean":
        return _contrast_scan(ps, s, e, d)
    lo, hi = s + d, e - d + 1
    best_b, best = -1, -np.inf
    for b in range(lo, hi + 1):
        stat = math.sqrt(max(glr_contrast(values, s, b, e, family=family), 0.0))
        if stat > best:
            best_b, best = b, stat
    return best_b, best


def narrowest_over_threshold(y, cfg: DetectionConfig | None = None,
                             family: str = "mean",
                             trace: list | None = None) -> list[int]:
    """NOT: split inside the shortest interval whose contrast clears the bar.

    Supported families: mean, linear_cont, linear, mean_var.  For non-mean
    families the contrast is sqrt(GLR); supply an explicit threshold when
    the default CUSUM-scale one is not appropriate.
    """
    values = _as_values(y)
    cfg = cfg or DetectionConfig()
    if family not in GLR_MIN_OBS:
        raise ValueError(f"unknown family {family!r}")
    n = values.size
    d = GLR_MIN_OBS[family]
    if n < 2 * d + 1:
        raise ValueError("series too short for this family")
    if family == "mean":
        zeta = _resolve_threshold(values, cfg)
    else:
        zeta = (math.sqrt(2.0 * math.log(n)) if cfg.threshold == "auto"
                else float(cfg.threshold))
    ps = PrefixSums(values)
    intervals = draw_intervals(n, cfg.M, 2 * d, cfg.seed).intervals
    found: list[int] = []

    def recurse(s: int, e: int):
        if e - s < 2 * d:
            return
        candidates = [(si, ei) for (si, ei) in intervals
                      if s <= si and ei <= e and ei - si >= 2 * d]
        candidates.append((s, e))
        over = []
        for (si, ei) in candidates:
            b, stat = _not_contrast_scan(values, ps, si, ei, family, cfg.min_segment)
            if b > 0 and stat > zeta:
                over.append((ei - si, si, ei, b, stat))
        if not over:
            return
        length, si, ei, b, stat = min(over)
        found.append(b)
        if trace is not None:
            trace.append(("split", si, b, ei, stat))
        recurse(s, b - 1)
        recurse(b, e)

    recurse(1, n)
    return sorted(found)


def _wcm_contrast_scan(ps: PrefixSums, lo: int, hi: int) -> tuple[int, float]:
    """Max |contrast| over splits k of the half-open block [lo, hi)."""
    if hi - lo < 2:
        return -1, -np.inf
    k = np.arange(lo + 1, hi)
    n1 = k - lo
    n2 = hi - k
    mean_left = (ps.s[k - 1] - ps.s[lo - 1]) / n1
    mean_right = (ps.s[hi - 1] - ps.s[k - 1]) / n2
    c = np.sqrt(n1 * n2 / (hi - lo)) * (mean_left - mean_right)
    idx = int(np.argmax(np.abs(c)))
    return int(k[idx]), float(abs(c[idx]))


def _dyadic_intervals(s: int, e: int) -> list[tuple[int, int]]:
    """Deterministic dyadic interval grid inside [s, e]."""
    out = []
    length = e - s + 1
    size = length
    while size >= 2:
        step = max(size // 2, 1)
        start = s
        while start + size - 1 <= e:
            out.append((start, start + size - 1))
            start += step
        size //= 2
    return out


def _wcm_candidates(values: np.ndarray, cfg: DetectionConfig) -> list[tuple[int, float]]:
    """Phase 1: n-1 nested candidates by recursive contrast maximization."""
    n = values.size
    ps = PrefixSums(values)
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    out: list[tuple[int, float]] = []

    def intervals_for(s: int, e: int) -> list[tuple[int, int]]:
        distinct = (e - s + 1) * (e - s) // 2
        if cfg.M >= distinct:
            return _dyadic_intervals(s, e)
        picks = []
        attempts = 0
        while len(picks) < cfg.M and attempts < 50 * cfg.M:
            a, b = rng.integers(s, e + 1, size=2)
            attempts += 1
            if a > b:
                a, b = b, a
            if b - a >= 1:
                picks.append((int(a), int(b)))
        return picks

    def recurse(s: int, e: int):
        if e - s + 1 < 2:
            return
        best_k, best_stat = _wcm_contrast_scan(ps, s, e + 1)
        for (si, ei) in intervals_for(s, e):
            k, stat = _wcm_contrast_scan(ps, si, ei + 1)
            if stat > best_stat:
                best_k, best_stat = k, stat
        if best_k < 0:
            return
        out.append((best_k, best_stat))
        recurse(s, best_k - 1)
        recurse(best_k, e)

    recurse(1, n)
    return out


def _ar_fit_segments(values: np.ndarray, s: int, e: int, taus_inside: list[int],
                     order: int) -> tuple[np.ndarray, float]:
    """OLS fit of y_t on `order` lags plus per-subsegment intercepts.

    Returns (phi coefficients, SSE) over t = s+order .. e.
    """
    t = np.arange(s + order, e + 1)
    if t.size <= order + len(taus_inside) + 1:
        raise ValueError("segment too short for AR fitting")
    cols = [values[t - 1 - lag] for lag in range(1, order + 1)]
    bounds = [s, *taus_inside, e + 1]
    for a, b in zip(bounds, bounds[1:]):
        ind = ((t >= a) & (t < b)).astype(float)
        cols.append(ind)
    design = np.column_stack(cols)
    target = values[t - 1]
    coef, _, _, _ = np.linalg.lstsq(design, target, rcond=None)
    fit = design @ coef
    sse = float(np.sum((target - fit) ** 2))
    return coef[:order], sse


def _ar_sse_fixed_phi(values: np.ndarray, s: int, e: int, phi: np.ndarray) -> float:
    """SSE of the no-changepoint segment model with phi held fixed."""
    order = phi.size
    t = np.arange(s + order, e + 1)
    resid = values[t - 1].astype(float).copy()
    for lag in range(1, order + 1):
        resid -= phi[lag - 1] * values[t - 1 - lag]
    return float(np.sum((resid - resid.mean()) ** 2))


def _select_ar_order(values: np.ndarray, taus: list[int], max_order: int = 5) -> int:
    """AR order for the full series by BIC over 1..max_order."""
    n = values.size
    best_order, best_bic = 1, np.inf
    for order in range(1, max_order + 1):
        try:
            _, sse = _ar_fit_segments(values, 1, n, taus, order)
        except ValueError:
            continue
        m_eff = n - order
        bic = m_eff * math.log(max(sse, 1e-300) / m_eff) + order * math.log(m_eff)
        if bic < best_bic:
            best_order, best_bic = order, bic
    return best_order


def wcm(y, cfg: DetectionConfig | None = None) -> tuple[list[int], float, int]:
    """Wild contrast maximization with gappy-BIC model selection.

    Phase 1 ranks n-1 nested candidates by recursive interval contrast
    maximization.  Phase 2 keeps the models at the R largest gaps of the
    sorted BIC sequence (R = cfg.max_changepoints), fits AR structure by
    least squares, then backward-selects with the per-segment BIC rule,
    always estimating phi under the larger model.
    """
    values = _as_values(y)
    cfg = cfg or DetectionConfig()
    n = values.size
    if n < 10:
        raise ValueError("wcm requires n >= 10")

    if cfg.max_changepoints == 0:
        order = _select_ar_order(values, [])
        phi, _ = _ar_fit_segments(values, 1, n, [], order)
        return [], float(phi[0]), order

    candidates = _wcm_candidates(values, cfg)
    candidates.sort(key=lambda ks: -ks[1])
    ordered = [k for k, _ in candidates]

    # BIC of each nested mean-shift model.
    bics = []
    for j in range(len(ordered) + 1):
        taus = sorted(ordered[:j])
        fit = piecewise_mean_fit(values, taus)
        sse = max(fit.sse, 1e-300)
        bics.append((n * math.log(sse / n) + (j + 1) * math.log(n), j))

    # Models at the R largest gaps of the sorted BIC sequence, plus the null.
    by_bic = sorted(bics)
    gaps = [(by_bic[i + 1][0] - by_bic[i][0], by_bic[i][1])
            for i in range(len(by_bic) - 1)]
    gaps.sort(reverse=True)
    keep = {j for _, j in gaps[: cfg.max_changepoints]}
    keep.add(0)
    model_sizes = sorted(keep)
    models = [sorted(ordered[:j]) for j in model_sizes]

    order = _select_ar_order(values, models[-1])

    # Backward selection over the nested phase-2 models.
    current = len(models) - 1
    while current > 0:
        larger = models[current]
        smaller = models[current - 1]
        new_taus = [t for t in larger if t not in smaller]
        bounds = [1, *smaller, n + 1]
        prefer_smaller = False
        for a, b in zip(bounds, bounds[1:]):
            inside = [t for t in new_taus if a < t < b]
            if not inside:
                continue
            seg_e = b - 1
            length = seg_e - a + 1
            try:
                phi, sse_with = _ar_fit_segments(values, a, seg_e, inside, order)
                sse_without = _ar_sse_fixed_phi(values, a, seg_e, phi)
            except ValueError:
                prefer_smaller = True
                break
            q = len(inside)
            bic_with = (length / 2.0) * math.log(max(sse_with, 1e-300) / length) \
                + (q + order) * math.log(length)
            bic_without = (length / 2.0) * math.log(max(sse_without, 1e-300) / length) \
                + order * math.log(length)
            if bic_without < bic_with:
                prefer_smaller = True
                break
        if prefer_smaller:
            current -= 1
        else:
            break

    final = models[current]
    try:
        phi, _ = _ar_fit_segments(values, 1, n, final, order)
        phi1 = float(phi[0])
    except ValueError:
        phi1 = 0.0
    return final, phi1, order
