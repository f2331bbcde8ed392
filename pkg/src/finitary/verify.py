"""Statistical checks shared by the coders."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .dist_core import JumpDistribution
from .errors import TooFewSamples
from .renewal_coder import CoderParams

MIN_EXPECTED = 5.0


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    p_value: float
    dof: int
    bins: list[tuple[int, int | None]]  # inclusive ranges, None = open tail

    def passed(self, alpha: float = 1e-3) -> bool:
        return self.p_value > alpha


def pooled_bins(d: JumpDistribution, n: int, min_expected: float = MIN_EXPECTED) -> list[tuple[int, int | None]]:
    """Adjacent values merged left to right until each bin expects
    ``min_expected`` counts; the remainder of the support is one open bin."""
    bins: list[tuple[int, int | None]] = []
    start, acc, t = 1, 0.0, 1
    while True:
        tail = d.survival(t + 1) * n
        acc += d.pmf(t) * n
        if acc >= min_expected and tail >= min_expected:
            bins.append((start, t))
            start, acc = t + 1, 0.0
        elif tail < min_expected:
            bins.append((start, None))
            return bins
        t += 1


def chi_square_gaps(gaps, d: JumpDistribution, min_samples: int = 1000) -> ChiSquareResult:
    """Pearson goodness of fit of observed gaps against ``p(.)``.

    A gap at a value of zero probability fails outright
    (statistic ``inf``, p-value 0).
    """
    gaps = np.asarray(gaps, dtype=np.int64)
    n = gaps.size
    if n < min_samples:
        raise TooFewSamples(f"{n} gaps, need at least {min_samples}")
    values, counts = np.unique(gaps, return_counts=True)
    probs = np.array([d.pmf(int(v)) for v in values])
    bins = pooled_bins(d, n)
    if np.any(probs <= 0.0):
        return ChiSquareResult(math.inf, 0.0, max(len(bins) - 1, 1), bins)
    obs, exp = [], []
    for lo, hi in bins:
        if hi is None:
            obs.append(int(counts[values >= lo].sum()))
            exp.append(d.survival(lo) * n)
        else:
            obs.append(int(counts[(values >= lo) & (values <= hi)].sum()))
            exp.append(sum(d.pmf(t) for t in range(lo, hi + 1)) * n)
    obs_a, exp_a = np.asarray(obs, float), np.asarray(exp, float)
    stat = float(np.sum((obs_a - exp_a) ** 2 / exp_a))
    dof = len(bins) - 1
    if dof < 1:
        return ChiSquareResult(stat, 1.0, 0, bins)
    return ChiSquareResult(stat, float(stats.chi2.sf(stat, dof)), dof, bins)


@dataclass(frozen=True)
class TailFit:
    slope: float
    intercept: float
    r2: float
    n: int
    fit_range: tuple[int, int]
    degenerate: bool = False
    geometric_bound_rate: float | None = None
    reference_slope: float | None = None
    dominance_ratio: float | None = None

    def passed(self, r2_min: float = 0.98, ratio_max: float | None = None) -> bool:
        if self.degenerate or not self.slope < 0 or self.r2 <= r2_min:
            return False
        if ratio_max is not None and self.dominance_ratio is not None:
            return self.dominance_ratio <= ratio_max
        return True


def empirical_survival(samples) -> tuple[np.ndarray, np.ndarray]:
    """``(r, P(R >= r))`` for ``r`` from the minimum to the maximum sample."""
    x = np.asarray(samples, dtype=np.int64)
    lo, hi = int(x.min()), int(x.max())
    counts = np.bincount(x - lo, minlength=hi - lo + 1)
    surv = np.cumsum(counts[::-1])[::-1] / x.size
    return np.arange(lo, hi + 1), surv


def geometric_reference(r: np.ndarray, params: CoderParams) -> np.ndarray:
    """Dominating survival ``(1 - rho)**ceil((r - n0) / (n0 + 1))`` of the
    window ``R = j - I(j) + n0`` with ``rho = a**2 (1-b)**(n0-1)``."""
    n0 = params.n0
    k = np.ceil(np.maximum(r - n0, 0) / (n0 + 1))
    return (1.0 - params.event_prob) ** k


def fit_window_tail(windows, params: CoderParams | None = None, min_samples: int = 10_000,
                    min_count: float = 50.0) -> TailFit:
    """Least-squares line through ``log P(R >= r)`` where the survival is
    at least ``min_count / n``."""
    w = np.asarray(windows, dtype=np.int64)
    n = w.size
    if n < min_samples:
        raise TooFewSamples(f"{n} windows, need at least {min_samples}")
    r, surv = empirical_survival(w)
    keep = surv >= min_count / n
    r, surv = r[keep], surv[keep]
    rate = params.event_prob if params is not None else None
    ref_slope = math.log1p(-rate) / (params.n0 + 1) if params is not None else None
    if r.size < 3 or np.unique(w).size < 2:
        return TailFit(math.nan, math.nan, 0.0, n, (int(r[0]), int(r[-1])), True, rate, ref_slope)
    y = np.log(surv)
    slope, intercept = np.polyfit(r, y, 1)
    resid = y - (slope * r + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 0.0
    ratio = None
    if params is not None:
        ratio = float(np.max(surv / geometric_reference(r, params)))
    return TailFit(float(slope), float(intercept), r2, n, (int(r[0]), int(r[-1])), False,
                   rate, ref_slope, ratio)


@dataclass(frozen=True)
class LagReport:
    rho: np.ndarray
    threshold: float
    n: int

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.rho) < self.threshold))


def independence_lag(gaps, max_lag: int = 5, min_samples: int = 10_000) -> LagReport:
    """Sample autocorrelations at lags ``1..max_lag``; passes iff all
    ``|rho_k| < 3 / sqrt(n)``.  Constant input counts as independent."""
    x = np.asarray(gaps, dtype=np.float64)
    n = x.size
    if n < min_samples:
        raise TooFewSamples(f"{n} samples, need at least {min_samples}")
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    if denom == 0.0:
        rho = np.zeros(max_lag)
    else:
        rho = np.array([np.dot(xc[:-k], xc[k:]) / denom for k in range(1, max_lag + 1)])
    return LagReport(rho, 3.0 / math.sqrt(n), n)


def jump_variance(d: JumpDistribution) -> float:
    n_max = d.K + 1
    while d.survival(n_max) > 1e-18:
        n_max *= 2
    n = np.arange(1, n_max + 1, dtype=np.float64)
    p = d.pmf_array(n_max)
    return float(np.dot(n * n, p) - np.dot(n, p) ** 2)


@dataclass(frozen=True)
class DensityCheck:
    density: float
    target: float
    sigma: float

    @property
    def z(self) -> float:
        return abs(self.density - self.target) / self.sigma if self.sigma > 0 else (
            0.0 if self.density == self.target else math.inf)

    @property
    def passed(self) -> bool:
        return self.z < 3.0


def density_check(bits, d: JumpDistribution) -> DensityCheck:
    """Point density against ``1/E[T]``; the standard error uses the
    renewal-theory variance ``Var(T) / E[T]**3`` per index."""
    bits = np.asarray(bits)
    m = d.mean
    sigma = math.sqrt(jump_variance(d) / m ** 3 / bits.size)
    return DensityCheck(float(bits.mean()), 1.0 / m, sigma)
