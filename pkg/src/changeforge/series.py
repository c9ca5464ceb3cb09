"""Core series types, segment costs, and piecewise-constant fits.

Indexing convention: all changepoint arithmetic is origin-1.  A changepoint
tau is the first index of the new segment, with implicit boundaries
tau_0 = 1 and tau_{m+1} = n + 1, so segment i covers tau_{i-1} .. tau_i - 1.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "TimeSeries",
    "ChangepointVector",
    "SegmentedFit",
    "CostFunction",
    "PrefixSums",
    "rss_cost",
    "piecewise_mean_fit",
    "segment_slices",
    "load_series_csv",
]


def _as_values(y) -> np.ndarray:
    if isinstance(y, TimeSeries):
        return y.values
    arr = np.asarray(y, dtype=float)
    if arr.ndim != 1:
        raise ValueError("series must be one-dimensional")
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """Ordered real-valued observations with an optional time index."""

    values: np.ndarray
    time: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("TimeSeries requires a 1-d sequence of length >= 1")
        if not np.all(np.isfinite(values)):
            raise ValueError("TimeSeries values must all be finite")
        object.__setattr__(self, "values", values)
        if self.time is not None:
            t = np.asarray(self.time, dtype=float)
            if t.shape != values.shape:
                raise ValueError("time index must match values in length")
            object.__setattr__(self, "time", t)

    def __len__(self) -> int:
        return self.values.size

    @property
    def n(self) -> int:
        return self.values.size


def validate_taus(taus: Sequence[int], n: int) -> list[int]:
    """Check a changepoint vector against series length n (origin-1)."""
    out = [int(t) for t in taus]
    if any(b <= a for a, b in zip(out, out[1:])):
        raise ValueError("changepoints must be strictly increasing")
    if out and (out[0] < 2 or out[-1] > n):
        raise ValueError(f"changepoints must lie in [2, {n}]")
    return out


@dataclass(frozen=True)
class ChangepointVector:
    """Strictly increasing segment-start indices, each in [2, n]."""

    taus: tuple
    n: int

    def __post_init__(self):
        object.__setattr__(self, "taus", tuple(validate_taus(self.taus, self.n)))

    @property
    def m(self) -> int:
        return len(self.taus)

    def boundaries(self) -> list[int]:
        """Segment boundaries including tau_0 = 1 and tau_{m+1} = n + 1."""
        return [1, *self.taus, self.n + 1]


@dataclass
class SegmentedFit:
    """A piecewise fit: changepoints, per-segment parameters, and fit quality."""

    taus: list
    segment_params: list
    sse: float
    loglik: float


@dataclass(frozen=True)
class CostFunction:
    """Segment cost: residual sum of squares or Gaussian negative log-likelihood.

    kind "rss" is the plain within-segment RSS.  kind "gaussian-nll" is
    -2 log likelihood at the segment mean with a fixed noise variance.
    """

    kind: str = "rss"
    variance: float = 1.0

    def __post_init__(self):
        if self.kind not in ("rss", "gaussian-nll"):
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.kind == "gaussian-nll" and self.variance <= 0:
            raise ValueError("gaussian-nll requires a positive variance")


def _kahan_cumsum(x: np.ndarray) -> np.ndarray:
    """Compensated running sums; out[i] = sum of x[:i], out[0] = 0."""
    out = np.empty(x.size + 1)
    out[0] = 0.0
    total = 0.0
    comp = 0.0
    for i, v in enumerate(x):
        t = v - comp
        s = total + t
        comp = (s - total) - t
        total = s
        out[i + 1] = total
    return out


class PrefixSums:
    """Prefix sums of y and y^2 enabling O(1) segment RSS queries.

    Sums are accumulated with compensated (Kahan) summation so that the
    O(n^2) cost queries made by the DP solvers do not see cumulative drift.
    """

    def __init__(self, y):
        values = _as_values(y)
        self.n = values.size
        self.s = _kahan_cumsum(values)
        self.ss = _kahan_cumsum(values * values)

    def segment_sum(self, s: int, e: int) -> float:
        return self.s[e] - self.s[s - 1]

    def rss(self, s: int, e: int) -> float:
        """RSS of y[s..e] about its mean, origin-1 inclusive bounds."""
        if not (1 <= s <= e <= self.n):
            raise IndexError(f"segment [{s}, {e}] out of range for n={self.n}")
        length = e - s + 1
        seg = self.s[e] - self.s[s - 1]
        seg2 = self.ss[e] - self.ss[s - 1]
        return max(seg2 - seg * seg / length, 0.0)

    def rss_vector(self, starts: np.ndarray, e: int) -> np.ndarray:
        """RSS of y[s..e] for an array of segment starts (vectorized)."""
        lengths = e - starts + 1
        seg = self.s[e] - self.s[starts - 1]
        seg2 = self.ss[e] - self.ss[starts - 1]
        return np.maximum(seg2 - seg * seg / lengths, 0.0)

    def cost_vector(self, starts: np.ndarray, e: int, cost: CostFunction) -> np.ndarray:
        rss = self.rss_vector(starts, e)
        if cost.kind == "rss":
            return rss
        lengths = e - starts + 1
        return rss / cost.variance + lengths * math.log(2.0 * math.pi * cost.variance)


def rss_cost(y, s: int, e: int) -> float:
    """Sum of squared deviations of y[s..e] from the segment mean (origin-1)."""
    return PrefixSums(y).rss(s, e)


def segment_slices(taus: Sequence[int], n: int):
    """Yield (start, end) origin-1 inclusive bounds for each segment."""
    bounds = [1, *validate_taus(taus, n), n + 1]
    for a, b in zip(bounds, bounds[1:]):
        yield a, b - 1


def piecewise_mean_fit(y, taus: Sequence[int]) -> SegmentedFit:
    """Fit per-segment arithmetic means for the given changepoints."""
    values = _as_values(y)
    n = values.size
    ps = PrefixSums(values)
    means = []
    sse = 0.0
    for s, e in segment_slices(taus, n):
        means.append(ps.segment_sum(s, e) / (e - s + 1))
        sse += ps.rss(s, e)
    sigma2 = max(sse / n, 1e-300)
    loglik = -0.5 * n * (math.log(2.0 * math.pi * sigma2) + 1.0)
    return SegmentedFit(list(validate_taus(taus, n)), means, sse, loglik)


def load_series_csv(path) -> TimeSeries:
    """Read a series from CSV: one value per line, or "t,value" columns.

    A non-numeric first line is treated as a header and skipped.
    """
    if hasattr(path, "read"):
        text = path.read()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    rows = []
    for line in io.StringIO(text):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rows.append([tok for tok in line.replace(",", " ").split() if tok])
    if not rows:
        raise ValueError("empty series file")

    def _floats(row):
        try:
            return [float(tok) for tok in row]
        except ValueError:
            return None

    if _floats(rows[0]) is None:
        rows = rows[1:]  # header line
    parsed = [_floats(r) for r in rows]
    if any(p is None for p in parsed):
        raise ValueError("non-numeric data row in series file")
    width = {len(p) for p in parsed}
    if width == {1}:
        return TimeSeries(np.array([p[0] for p in parsed]))
    if width == {2}:
        t = np.array([p[0] for p in parsed])
        v = np.array([p[1] for p in parsed])
        return TimeSeries(v, t)
    raise ValueError("series file must have one or two columns")
