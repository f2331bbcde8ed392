"""Generating-function analysis of the compound-geometric jump ``T*_mu``.

``T*_mu = T_1 + ... + T_N`` with ``N ~ Geom(mu)``.  Its pgf is
``F(z) = mu G(z) / (1 - (1-mu) G(z))``; the real root ``nu`` of
``(1-mu) G(nu) = 1`` is a simple pole of ``F`` and

    P(T*_mu = n) = c nu**(-n-1) + O(kappa**-n),   c = mu / ((1-mu)**2 G'(nu)).

Every routine accepts ``dps`` to switch to mpmath arithmetic at that many
decimal digits; residuals far below double precision need it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .dist_core import JumpDistribution, load_jump_distribution, validate_codable
from .errors import DegenerateFit, LatticeInput, MuInfeasible, OutsideRadius

ROOT_TOL = 1e-12
RESIDUAL_FLOOR = 1e-13


def radius(d: JumpDistribution) -> float:
    """Radius of convergence of ``G``."""
    return math.inf if d.tail is None else 1.0 / d.tail.rate


def evaluate_G(d: JumpDistribution, z, order: int = 0, dps: int | None = None):
    """``G(z) = E[z**T]`` (``order=0``) or ``G'(z)`` (``order=1``).

    The head is summed directly; the geometric tail is summed in closed form.
    """
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    if z >= radius(d):
        raise OutsideRadius(f"z={z} is outside the radius of convergence {radius(d)}")
    if dps is not None:
        with mpmath.workdps(dps):
            return _evaluate_G_mp(d, mpmath.mpf(z), order)
    z = float(z)
    K = d.K
    n = np.arange(1, K + 1, dtype=np.float64)
    if order == 0:
        total = float(np.dot(d._head, z ** n)) if K else 0.0
    else:
        total = float(np.dot(d._head * n, z ** (n - 1))) if K else 0.0
    if d.tail is not None:
        A, lam = d.tail.coef, d.tail.rate
        w = lam * z
        if order == 0:
            total += A * w ** (K + 1) / (1.0 - w)
        else:
            total += A * lam * w ** K * ((K + 1) - K * w) / (1.0 - w) ** 2
    return total


def _evaluate_G_mp(d: JumpDistribution, z, order: int):
    K = d.K
    total = mpmath.mpf(0)
    for n, p in enumerate(d.head, start=1):
        if p:
            total += mpmath.mpf(p) * (z ** n if order == 0 else n * z ** (n - 1))
    if d.tail is not None:
        A, lam = mpmath.mpf(d.tail.coef), mpmath.mpf(d.tail.rate)
        w = lam * z
        if order == 0:
            total += A * w ** (K + 1) / (1 - w)
        else:
            total += A * lam * w ** K * ((K + 1) - K * w) / (1 - w) ** 2
    return total


@dataclass(frozen=True)
class GfReport:
    """Outcome of :func:`analyze_gf`.

    ``nu`` and ``c`` are mpmath numbers when the analysis ran with ``dps``.
    ``kappa_est`` stays ``None`` until :func:`verify_asymptotic` fills a copy.
    """

    mu: float
    nu: float
    c: float
    radius: float
    root_residual: float
    kappa_est: float | None = None
    dps: int | None = field(default=None, compare=False)

    @property
    def hazard_limit(self) -> float:
        """Limiting hazard ``(nu - 1) / nu`` of ``T*_mu``."""
        return float((self.nu - 1) / self.nu)


def _upper_bracket(d: JumpDistribution, mu: float) -> float:
    f = lambda z: (1.0 - mu) * evaluate_G(d, z) - 1.0  # noqa: E731
    if d.tail is None:
        z = 2.0
        while f(z) <= 0.0:
            z *= 2.0
            if z > 1e300:
                raise MuInfeasible(f"no root of (1-mu)G = 1 for mu={mu}")
        return z
    z = radius(d) * (1.0 - 1e-9)
    if f(z) <= 0.0:
        raise MuInfeasible(f"(1-mu)G stays below 1 up to the radius for mu={mu}")
    return z


def analyze_gf(d: JumpDistribution, mu: float, dps: int | None = None) -> GfReport:
    """Locate ``nu`` by bisection and compute the residue constant ``c``."""
    if not 0.0 < mu < 1.0:
        raise MuInfeasible(f"mu must lie in (0,1), got {mu}")
    rep = validate_codable(d)
    if not rep.non_lattice:
        raise LatticeInput(f"jump distribution is lattice (gcd {rep.gcd})")
    hi = _upper_bracket(d, mu)
    lo = 1.0
    # (1-mu) G(1) = 1 - mu < 1 <= (1-mu) G(hi): the bracket is valid
    if dps is None:
        f = lambda z: (1.0 - mu) * evaluate_G(d, z) - 1.0  # noqa: E731
        while True:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if f(mid) > 0.0:
                hi = mid
            else:
                lo = mid
        nu = lo if abs(f(lo)) <= abs(f(hi)) else hi
        resid = abs(f(nu))
        if resid > ROOT_TOL:
            raise MuInfeasible(f"bisection stalled with residual {resid:g}")
        c = mu / ((1.0 - mu) ** 2 * evaluate_G(d, nu, 1))
    else:
        with mpmath.workdps(dps):
            m = mpmath.mpf(mu)
            lo_, hi_ = mpmath.mpf(lo), mpmath.mpf(hi)
            f = lambda z: (1 - m) * _evaluate_G_mp(d, z, 0) - 1  # noqa: E731
            eps = mpmath.mpf(10) ** (-dps + 2)
            while hi_ - lo_ > eps * hi_:
                mid = (lo_ + hi_) / 2
                if f(mid) > 0:
                    hi_ = mid
                else:
                    lo_ = mid
            nu = mpmath.findroot(f, (lo_ + hi_) / 2)
            resid = abs(f(nu))
            c = m / ((1 - m) ** 2 * _evaluate_G_mp(d, nu, 1))
    if not c > 0:
        raise MuInfeasible(f"non-positive residue constant {c}")
    return GfReport(mu=mu, nu=nu, c=c, radius=radius(d), root_residual=float(resid), dps=dps)


def pmf_Tstar(d: JumpDistribution, mu: float, n_max: int, dps: int | None = None) -> np.ndarray:
    """``q(n) = P(T*_mu = n)`` for ``n = 1..n_max`` (index 0 holds ``q(1)``).

    Renewal decomposition on the first jump:
    ``q(n) = mu p(n) + (1-mu) sum_{k<n} p(k) q(n-k)``.
    With ``dps`` the result is an object array of mpmath numbers.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if dps is not None:
        with mpmath.workdps(dps):
            m = mpmath.mpf(mu)
            p = [mpmath.mpf(0)] + [mpmath.mpf(x) for x in d.pmf_array(n_max)]
            if d.tail is not None:
                A, lam = mpmath.mpf(d.tail.coef), mpmath.mpf(d.tail.rate)
                for n in range(d.K + 1, n_max + 1):
                    p[n] = A * lam ** n
            q = [mpmath.mpf(0)] * (n_max + 1)
            for n in range(1, n_max + 1):
                acc = mpmath.fsum(p[k] * q[n - k] for k in range(1, n) if p[k])
                q[n] = m * p[n] + (1 - m) * acc
            return np.array(q[1:], dtype=object)
    p = d.pmf_array(n_max)
    q = np.zeros(n_max, dtype=np.float64)
    for n in range(1, n_max + 1):
        # p[0:n-1] holds p(1..n-1); q[n-2::-1] holds q(n-1..1)
        conv = float(np.dot(p[: n - 1], q[n - 2 :: -1])) if n > 1 else 0.0
        q[n - 1] = mu * p[n - 1] + (1.0 - mu) * conv
    return q


def pmf_hazards(q: np.ndarray, tail_mass: float = 0.0) -> np.ndarray:
    """Hazards of a pmf sequence, with survival summed from the right.

    ``tail_mass`` is the probability beyond ``len(q)``.
    """
    q = np.asarray(q, dtype=np.float64)
    surv = np.cumsum(q[::-1])[::-1] + tail_mass
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(surv > 0, q / surv, np.nan)


@dataclass(frozen=True)
class AsymptoticReport:
    kappa_est: float
    exact: bool
    slope: float
    r2: float
    max_residual: float
    fit_range: tuple[int, int]
    n_points: int
    residuals: np.ndarray = field(repr=False)


def residuals(q, report: GfReport) -> np.ndarray:
    """``r(n) = q(n) - c nu**(-n-1)`` in the arithmetic of ``q``."""
    n_max = len(q)
    if report.dps is not None and q.dtype == object:
        with mpmath.workdps(report.dps):
            return np.array([q[n - 1] - report.c * report.nu ** (-n - 1) for n in range(1, n_max + 1)],
                            dtype=object)
    n = np.arange(1, n_max + 1, dtype=np.float64)
    nu, c = float(report.nu), float(report.c)
    return np.asarray(q, dtype=np.float64) - c * nu ** (-n - 1)


def verify_asymptotic(q, report: GfReport, n_range: tuple[int, int] | None = None,
                      floor: float | None = None) -> AsymptoticReport:
    """Estimate the secondary decay rate ``kappa`` from the residuals.

    Residuals whose magnitude is below ``floor * q(n)`` are treated as
    rounding noise and left out of the fit; the default floor is 1e-13 in
    double precision and ``10**(5 - dps)`` under mpmath.  When every
    residual is noise the remainder is exactly zero and ``kappa`` is
    reported as ``inf``.
    """
    q = np.asarray(q)
    if len(q) < 2:
        raise DegenerateFit("need at least two terms to fit a decay rate")
    r = residuals(q, report)
    if floor is None:
        floor = RESIDUAL_FLOOR if (report.dps is None or q.dtype != object) else 10.0 ** (5 - report.dps)
    n_lo, n_hi = n_range or (1, len(q))
    n_hi = min(n_hi, len(q))
    ns = np.arange(n_lo, n_hi + 1)
    # logs in mpmath space avoid underflow of residuals below 1e-308
    abs_r = [abs(r[n - 1]) for n in ns]
    noise = [floor * abs(q[n - 1]) for n in ns]
    keep = [i for i in range(len(ns)) if abs_r[i] > noise[i] and abs_r[i] > 0]
    max_res = float(max(abs_r)) if abs_r else 0.0
    if len(keep) == 0 or (len(keep) < 2 and max_res < RESIDUAL_FLOOR):
        return AsymptoticReport(math.inf, True, -math.inf, 1.0, max_res, (int(n_lo), int(n_hi)), 0, r)
    if len(keep) < 2:
        raise DegenerateFit("fewer than two residuals above the noise floor")
    x = ns[keep].astype(np.float64)
    y = np.array([float(mpmath.log(abs_r[i])) for i in keep])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return AsymptoticReport(kappa_est=float(math.exp(-slope)), exact=False, slope=float(slope), r2=r2,
                            max_residual=max_res, fit_range=(int(x[0]), int(x[-1])),
                            n_points=len(keep), residuals=r)


def tstar_distribution(d: JumpDistribution, report: GfReport, window: int = 32,
                       rel_tol: float = 1e-13, n_cap: int = 1 << 14) -> JumpDistribution:
    """``T*_mu`` as a :class:`JumpDistribution`.

    The head is ``q(1..K)`` from the renewal recursion; beyond ``K`` the
    pole term ``c nu**(-n-1)`` is used as the geometric tail.  ``K`` is the
    first index after which ``window`` consecutive residuals sit below
    ``rel_tol`` relative to ``q``, so the graft changes no probability by
    more than that relative amount.
    """
    mu = report.mu
    nu, c = float(report.nu), float(report.c)
    n_max = 256
    while True:
        q = pmf_Tstar(d, mu, n_max)
        n = np.arange(1, n_max + 1, dtype=np.float64)
        pole = c * nu ** (-n - 1)
        bad = np.abs(q - pole) > rel_tol * np.maximum(np.abs(q), pole)
        # both sides near underflow: the comparison carries no information
        bad &= np.maximum(np.abs(q), pole) > 1e-280
        bad_idx = np.flatnonzero(bad)
        K = int(bad_idx[-1]) + 1 if bad_idx.size else 0
        if n_max - K >= window:
            break
        if n_max >= n_cap:
            raise MuInfeasible(f"T*_mu tail did not settle by n={n_cap}; try a smaller mu")
        n_max *= 2
    return load_jump_distribution(head=list(q[:K]), tail=(c / nu, 1.0 / nu))


def choose_mu(d: JumpDistribution, mu: float = 0.5, floor: float = 2.0 ** -20,
              dps: int | None = None) -> tuple[GfReport, JumpDistribution]:
    """Start at ``mu`` and halve until the analysis and tail graft succeed."""
    err: Exception | None = None
    while mu >= floor:
        try:
            rep = analyze_gf(d, mu, dps=dps)
            return rep, tstar_distribution(d, rep)
        except MuInfeasible as exc:
            err = exc
            mu /= 2.0
    raise MuInfeasible(f"no feasible mu down to {floor}: {err}")
