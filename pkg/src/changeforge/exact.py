"""Exact dynamic-programming segmenters: optimal partitioning, PELT,
segment neighbourhood with and without functional pruning, continuous
piecewise-linear optimal partitioning, and AR(1) decorrelated segmentation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .series import CostFunction, PrefixSums, _as_values, piecewise_mean_fit

__all__ = [
    "optimal_partition",
    "pelt",
    "segment_neighbourhood",
    "pruned_segment_neighbourhood",
    "CpopResult",
    "cpop",
    "ar1seg",
]

_TIE_TOL = 1e-12


def _pick_min(costs: np.ndarray, cps_count: np.ndarray, candidates: np.ndarray) -> int:
    """Index of the minimal cost; exact ties prefer fewer changepoints,
    then the smaller last-changepoint index."""
    best = costs.min()
    tied = np.flatnonzero(costs <= best)
    if tied.size == 1:
        return int(tied[0])
    order = sorted(tied, key=lambda i: (cps_count[i], candidates[i]))
    return int(order[0])


def optimal_partition(y, beta: float, cost: CostFunction | None = None
                      ) -> tuple[list[int], float]:
    """Globally optimal penalized segmentation by the O(n^2) recursion.

    Follows the convention F(1) = -beta, so the returned total cost is
    sum of segment costs plus beta * m.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    values = _as_values(y)
    cost = cost or CostFunction()
    n = values.size
    ps = PrefixSums(values)
    F = np.empty(n + 2)
    F[1] = -beta
    back = np.zeros(n + 2, dtype=int)
    ncps = np.zeros(n + 2, dtype=int)
    for s in range(2, n + 2):
        r = np.arange(1, s)
        total = F[r] + ps.cost_vector(r, s - 1, cost) + beta
        new_cps = ncps[r] + (r > 1)
        idx = _pick_min(total, new_cps, r)
        F[s] = total[idx]
        back[s] = r[idx]
        ncps[s] = new_cps[idx]
    taus = _backtrack_op(back, n)
    total_cost = float(F[n + 1])
    _verify_op_cost(values, taus, beta, cost, total_cost)
    return taus, total_cost


def _backtrack_op(back: np.ndarray, n: int) -> list[int]:
    taus = []
    s = n + 1
    while s > 1:
        r = back[s]
        if r == 1:
            break
        taus.append(int(r))
        s = r
    taus.reverse()
    return taus


def _verify_op_cost(values, taus, beta, cost: CostFunction, reported: float):
    ps = PrefixSums(values)
    n = values.size
    bounds = [1, *taus, n + 1]
    total = beta * len(taus)
    for a, b in zip(bounds, bounds[1:]):
        total += float(ps.cost_vector(np.array([a]), b - 1, cost)[0])
    if not math.isclose(total, reported, rel_tol=1e-8, abs_tol=1e-6):
        raise AssertionError(
            f"optimal-partition cost drift: recomputed {total} vs {reported}")


def pelt(y, beta: float, cost: CostFunction | None = None, K: float = 0.0,
         stats: dict | None = None) -> tuple[list[int], float]:
    """PELT: the optimal-partition recursion with provably safe pruning.

    Requires the cost to satisfy the split-gain inequality with constant K
    (K = 0 holds for RSS).  Candidate-set sizes are recorded in `stats`
    when a dict is supplied.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    values = _as_values(y)
    cost = cost or CostFunction()
    n = values.size
    ps = PrefixSums(values)
    F = np.empty(n + 2)
    F[1] = -beta
    back = np.zeros(n + 2, dtype=int)
    ncps = np.zeros(n + 2, dtype=int)
    cands = np.array([1], dtype=int)
    sizes = []
    for s in range(2, n + 2):
        seg = ps.cost_vector(cands, s - 1, cost)
        total = F[cands] + seg + beta
        new_cps = ncps[cands] + (cands > 1)
        idx = _pick_min(total, new_cps, cands)
        F[s] = total[idx]
        back[s] = cands[idx]
        ncps[s] = new_cps[idx]
        sizes.append(cands.size)
        # keep r only while F(r) + C(y_{r:s-1}) + K could still beat F(s)
        scale = max(abs(F[s]), 1.0)
        keep = F[cands] + seg + K < F[s] + _TIE_TOL * scale
        cands = np.append(cands[keep], s)
    if stats is not None:
        stats["candidate_sizes"] = sizes
        stats["max_candidates"] = max(sizes)
    taus = _backtrack_op(back, n)
    return taus, float(F[n + 1])


def segment_neighbourhood(y, m_max: int, cost: CostFunction | None = None
                          ) -> list[tuple[int, list[int], float]]:
    """Exact optima with exactly m changepoints for every m <= m_max."""
    values = _as_values(y)
    cost = cost or CostFunction()
    n = values.size
    if m_max >= n:
        raise ValueError("m_max must be smaller than n")
    ps = PrefixSums(values)
    INF = np.inf
    # F[m][s]: optimal cost of y_{1:(s-1)} with exactly m changepoints.
    F = np.full((m_max + 1, n + 2), INF)
    back = np.zeros((m_max + 1, n + 2), dtype=int)
    for s in range(2, n + 2):
        F[0][s] = float(ps.cost_vector(np.array([1]), s - 1, cost)[0])
    for m in range(1, m_max + 1):
        for s in range(m + 2, n + 2):
            r = np.arange(m + 1, s)
            total = F[m - 1][r] + ps.cost_vector(r, s - 1, cost)
            idx = int(np.argmin(total))
            F[m][s] = total[idx]
            back[m][s] = r[idx]
    out = [(0, [], float(F[0][n + 1]))]
    for m in range(1, m_max + 1):
        taus = [int(back[m][n + 1])]
        for i in range(m - 1, 0, -1):
            taus.append(int(back[i][taus[-1]]))
        taus.reverse()
        out.append((m, taus, float(F[m][n + 1])))
    return out


class _IntervalSet:
    """Sorted disjoint closed intervals on the real line."""

    __slots__ = ("parts",)

    def __init__(self, parts):
        self.parts = parts

    @classmethod
    def full(cls, lo, hi):
        return cls([(lo, hi)])

    def intersect(self, lo, hi):
        self.parts = [(max(a, lo), min(b, hi)) for a, b in self.parts
                      if min(b, hi) >= max(a, lo)]

    def subtract(self, lo, hi):
        out = []
        for a, b in self.parts:
            if hi < a or lo > b:
                out.append((a, b))
                continue
            if a < lo:
                out.append((a, lo))
            if hi < b:
                out.append((hi, b))
        self.parts = out

    @property
    def empty(self):
        return not self.parts


def pruned_segment_neighbourhood(y, m_max: int, stats: dict | None = None
                                 ) -> list[tuple[int, list[int], float]]:
    """Segment neighbourhood with functional pruning over the segment mean.

    Each live candidate r carries the quadratic (in the segment mean mu)
    F_{m-1}(r) + sum (y_i - mu)^2 and the mu-interval set on which it still
    achieves the pointwise minimum; candidates with empty sets are pruned.
    Squared-error cost only.  Outputs match segment_neighbourhood exactly.
    """
    values = _as_values(y)
    n = values.size
    if m_max >= n:
        raise ValueError("m_max must be smaller than n")
    lo, hi = float(values.min()), float(values.max())
    F = np.full((m_max + 1, n + 2), np.inf)
    back = np.zeros((m_max + 1, n + 2), dtype=int)
    ps = PrefixSums(values)
    for s in range(2, n + 2):
        F[0][s] = ps.rss(1, s - 1)
    pool_sizes = []
    for m in range(1, m_max + 1):
        # candidate r -> [A, B, C] for A*mu^2 + B*mu + C, plus its interval set
        quads: dict[int, list[float]] = {}
        sets: dict[int, _IntervalSet] = {}
        for s in range(m + 2, n + 2):
            v = values[s - 2]  # y_{s-1}, appended to every live segment
            newval = float(F[m - 1][s - 1])
            region = _IntervalSet.full(lo, hi)
            dead = []
            for r, (A, B, C) in quads.items():
                # where the existing candidate still beats starting afresh
                disc = B * B - 4.0 * A * (C - newval)
                if disc < 0.0:
                    ival = None
                else:
                    root = math.sqrt(disc)
                    ival = ((-B - root) / (2.0 * A), (-B + root) / (2.0 * A))
                if ival is None:
                    sets[r].parts = []
                else:
                    sets[r].intersect(*ival)
                    region.subtract(*ival)
                if sets[r].empty:
                    dead.append(r)
            for r in dead:
                del quads[r], sets[r]
            for quad in quads.values():
                quad[0] += 1.0
                quad[1] += -2.0 * v
                quad[2] += v * v
            if s - 1 >= m + 1 and np.isfinite(newval) and not region.empty:
                quads[s - 1] = [1.0, -2.0 * v, v * v + newval]
                sets[s - 1] = region
            if not quads:
                continue
            best_r, best_val = -1, np.inf
            for r in sorted(quads):
                A, B, C = quads[r]
                val = C - B * B / (4.0 * A)
                if val < best_val - _TIE_TOL * max(abs(val), 1.0):
                    best_r, best_val = r, val
            F[m][s] = best_val
            back[m][s] = best_r
            pool_sizes.append(len(quads))
    if stats is not None:
        stats["pool_sizes"] = pool_sizes
        stats["max_pool"] = max(pool_sizes) if pool_sizes else 0
    out = [(0, [], float(F[0][n + 1]))]
    for m in range(1, m_max + 1):
        taus = [int(back[m][n + 1])]
        for i in range(m - 1, 0, -1):
            taus.append(int(back[i][taus[-1]]))
        taus.reverse()
        out.append((m, taus, float(F[m][n + 1])))
    return out


# ---------------------------------------------------------------------------
# Continuous piecewise-linear segmentation


@dataclass
class CpopResult:
    taus: list
    knot_times: list
    knot_values: list
    cost: float

    def fitted(self) -> np.ndarray:
        """Fitted values at times 1..n via linear interpolation of the knots."""
        n = self.knot_times[-1]
        out = np.empty(n)
        for (s, t, fs, ft) in zip(self.knot_times, self.knot_times[1:],
                                  self.knot_values, self.knot_values[1:]):
            idx = np.arange(s + 1, t + 1)
            out[idx - 1] = fs + (ft - fs) * (idx - s) / (t - s)
        return out


class _CpopCandidate:
    __slots__ = ("last", "tau", "quad")

    def __init__(self, last, tau, quad):
        self.last = last      # time of the last changepoint (0 for the root)
        self.tau = tau        # tuple of changepoint times
        self.quad = quad      # (a, b, c): cost up to `last` vs knot value there


def _segment_quad(prev_quad, stats, sigma2, h_val, beta_val):
    """Minimize the previous cost plus one interpolated-segment cost over the
    interior knot, returning the quadratic in the segment's right knot value."""
    A, B, Cc, E, Fv, G = stats
    ap, bp, cp = prev_quad
    alpha = ap + A / sigma2
    p = bp - 2.0 * E / sigma2
    q = 2.0 * Cc / sigma2
    base_c = cp + G / sigma2 + h_val + beta_val
    if alpha <= 1e-12:
        return (max(B / sigma2, 0.0), -2.0 * Fv / sigma2, base_c, 0.0, 0.0, 0.0)
    a = B / sigma2 - q * q / (4.0 * alpha)
    b = -2.0 * Fv / sigma2 - p * q / (2.0 * alpha)
    c = base_c - p * p / (4.0 * alpha)
    return (max(a, 0.0), b, c, alpha, p, q)


class _CpopStats:
    """Prefix sums enabling O(1) interpolated-segment moments."""

    def __init__(self, values):
        n = values.size
        idx = np.arange(1.0, n + 1.0)
        self.sy = np.concatenate([[0.0], np.cumsum(values)])
        self.syy = np.concatenate([[0.0], np.cumsum(values * values)])
        self.syi = np.concatenate([[0.0], np.cumsum(values * idx)])

    def segment(self, s: int, t: int):
        """Moments of the segment (s, t] against u_i = (i - s)/(t - s)."""
        L = t - s
        yb = self.sy[t] - self.sy[s]
        ybi = (self.syi[t] - self.syi[s]) - s * yb
        yy = self.syy[t] - self.syy[s]
        q1 = L * (L + 1) / 2.0
        q2 = L * (L + 1) * (2 * L + 1) / 6.0
        A = L - 2.0 * q1 / L + q2 / (L * L)
        B = q2 / (L * L)
        Cc = q1 / L - q2 / (L * L)
        E = yb - ybi / L
        Fv = ybi / L
        return (A, B, Cc, E, Fv, yy)


def _min_of_quad(a, b, c):
    if a <= 1e-14:
        return c  # flat (or linear-degenerate) in the scanned range
    return c - b * b / (4.0 * a)


def _first_crossing(q1, q2, after):
    """Smallest root of q1 - q2 = 0 strictly beyond `after` (None if none)."""
    da = q1[0] - q2[0]
    db = q1[1] - q2[1]
    dc = q1[2] - q2[2]
    eps = 1e-9
    roots = []
    if abs(da) < 1e-14:
        if abs(db) < 1e-14:
            return None
        roots = [-dc / db]
    else:
        disc = db * db - 4.0 * da * dc
        if disc < 0.0:
            return None
        root = math.sqrt(disc)
        roots = [(-db - root) / (2.0 * da), (-db + root) / (2.0 * da)]
    valid = [r for r in sorted(roots) if r > after + eps]
    return valid[0] if valid else None


def _functional_survivors(cands, quads):
    """Indices of candidates achieving the pointwise envelope minimum
    somewhere, via a left-to-right crossing sweep."""
    live = list(range(len(cands)))
    if len(live) <= 1:
        return set(live)
    # minimal as phi -> -inf: smallest leading coeff, then largest slope
    curr = min(live, key=lambda i: (quads[i][0], -quads[i][1], quads[i][2]))
    survivors = {curr}
    phi_curr = -np.inf
    remaining = set(live) - {curr}
    while remaining:
        crossings = []
        dead = []
        for i in remaining:
            x = _first_crossing(quads[i], quads[curr], phi_curr)
            if x is None:
                dead.append(i)
            else:
                crossings.append((x, i))
        for i in dead:
            remaining.discard(i)
        if not crossings:
            break
        phi_curr, curr = min(crossings)
        survivors.add(curr)
        remaining.discard(curr)
    return survivors


def cpop(y, beta: float, sigma2: float | None = None, h=None) -> CpopResult:
    """Exact continuous piecewise-linear changepoint fit.

    Minimizes the per-segment scaled squared error of linear interpolants
    between knots, plus h(segment length) per segment and beta per
    changepoint.  Candidate histories are pruned functionally (no interval
    of the knot value where they win) and by the cost gap
    K = 2 beta + h(1) + h(n).
    """
    values = _as_values(y)
    n = values.size
    if n < 3:
        raise ValueError("cpop requires n >= 3")
    if sigma2 is None:
        d2 = np.diff(values, 2)
        mad = np.median(np.abs(d2 - np.median(d2))) / 0.6744897501960817
        sigma2 = max(mad * mad / 6.0, 1e-12)
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    h = h or (lambda length: 0.0)
    K = 2.0 * beta + h(1) + h(n)
    stats = _CpopStats(values)

    cands = [_CpopCandidate(0, (), (0.0, 0.0, 0.0))]
    for t in range(1, n + 1):
        quads = []
        for cand in cands:
            seg = stats.segment(cand.last, t)
            beta_val = 0.0 if cand.last == 0 else beta
            quads.append(_segment_quad(cand.quad, seg, sigma2,
                                       h(t - cand.last), beta_val)[:3])
        keep = _functional_survivors(cands, quads)
        mins = {i: _min_of_quad(*quads[i]) for i in keep}
        best = min(mins.values())
        keep = {i for i in keep if mins[i] <= best + K}
        survivors = [cands[i] for i in sorted(keep)]
        if t == n:
            cands, quads = survivors, [quads[i] for i in sorted(keep)]
            break
        spawned = [_CpopCandidate(t, c.tau + (t,), q)
                   for c, q in ((cands[i], quads[i]) for i in sorted(keep))
                   if t >= 2]
        cands = survivors + spawned

    ix = min(range(len(cands)), key=lambda i: _min_of_quad(*quads[i]))
    winner = cands[ix]
    best_cost = _min_of_quad(*quads[ix])
    chain = [0, *winner.tau, n]
    knot_values = _rebuild_knots(chain, stats, sigma2, h, beta)
    return CpopResult(list(winner.tau), chain, knot_values, float(best_cost))


def _rebuild_knots(chain, stats: _CpopStats, sigma2, h, beta):
    quad = (0.0, 0.0, 0.0)
    steps = []
    for s, t in zip(chain, chain[1:]):
        seg = stats.segment(s, t)
        beta_val = 0.0 if s == 0 else beta
        a, b, c, alpha, p, q = _segment_quad(quad, seg, sigma2, h(t - s), beta_val)
        steps.append((alpha, p, q))
        quad = (a, b, c)
    a, b, _ = quad
    phi = -b / (2.0 * a) if a > 1e-14 else 0.0
    knots = [phi]
    for (alpha, p, q) in reversed(steps):
        phi = -(p + q * phi) / (2.0 * alpha) if alpha > 1e-12 else phi
        knots.append(phi)
    knots.reverse()
    return knots


# ---------------------------------------------------------------------------
# AR(1) decorrelated segmentation


def ar1seg(y, m_max: int) -> tuple[list[int], float, list[float]]:
    """Two-step AR(1) segmentation: robust phi, decorrelate, then pSN + BIC.

    phi is the squared median-difference ratio estimator, clamped to
    [-0.99, 0.99] for stationarity.  Mean shifts are located on the
    decorrelated series z_t = y_t - phi y_{t-1}; the second member of any
    adjacent changepoint pair (an artifact of decorrelation) is dropped,
    and the model size is chosen by BIC with the Gaussian MLE variance.
    """
    values = _as_values(y)
    n = values.size
    if n < 5:
        raise ValueError("ar1seg requires n >= 5")
    num = float(np.median(np.abs(values[2:] - values[:-2])))
    den = float(np.median(np.abs(values[1:] - values[:-1])))
    if den == 0.0:
        raise ValueError("degenerate series: median absolute difference is zero")
    phi = (num * num) / (den * den) - 1.0
    phi = min(max(phi, -0.99), 0.99)

    z = values[1:] - phi * values[:-1]
    nz = z.size
    m_cap = min(m_max, nz - 1)
    models = pruned_segment_neighbourhood(z, m_cap)

    best = None
    for _, taus_z, _ in models:
        cleaned = []
        for t in taus_z:
            if cleaned and t == cleaned[-1] + 1:
                continue  # second member of an adjacent pair
            cleaned.append(t)
        fit = piecewise_mean_fit(z, cleaned)
        sigma2 = max(fit.sse / nz, 1e-300)
        k = 2 * len(cleaned) + 1
        bic = nz * math.log(sigma2) + k * math.log(nz)
        if best is None or bic < best[0] - 1e-12:
            best = (bic, cleaned, fit.segment_params)
    _, taus_z, deltas = best
    taus_y = [t + 1 for t in taus_z]
    return taus_y, float(phi), list(deltas)
