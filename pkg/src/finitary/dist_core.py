"""Integer jump distributions with an exact geometric tail.

A :class:`JumpDistribution` stores ``p(1..K)`` explicitly and, optionally,
``p(n) = coef * rate**n`` for every ``n > K``.  Survivals, hazards, means and
generating functions are then available in closed form, with no truncation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property, reduce
from pathlib import Path
from typing import Any

import numpy as np

from .errors import (
    EmptySupport,
    InvalidTailRate,
    MassDeviation,
    NegativeProbability,
    ZeroSurvival,
)
from .streams import ORACLE, UniformStream

LOAD_TOL = 1e-9


@dataclass(frozen=True)
class GeometricTail:
    coef: float
    rate: float


@dataclass(frozen=True, eq=False)
class JumpDistribution:
    """Law of a positive-integer jump time ``T``.

    Build instances through :func:`load_jump_distribution`, which validates
    and normalizes; the constructor trusts its input.
    """

    head: tuple[float, ...]
    tail: GeometricTail | None = None

    @property
    def K(self) -> int:
        return len(self.head)

    @property
    def bounded(self) -> bool:
        return self.tail is None

    @cached_property
    def _head(self) -> np.ndarray:
        return np.asarray(self.head, dtype=np.float64)

    @cached_property
    def tail_mass(self) -> float:
        """``P(T > K)``."""
        if self.tail is None:
            return 0.0
        lam = self.tail.rate
        return self.tail.coef * lam ** (self.K + 1) / (1.0 - lam)

    @cached_property
    def _head_survival(self) -> np.ndarray:
        # surv[n-1] = P(T >= n) for n = 1..K, summed from the right.
        rev = np.cumsum(self._head[::-1])[::-1]
        return rev + self.tail_mass

    @cached_property
    def mean(self) -> float:
        n = np.arange(1, self.K + 1)
        m = float(np.dot(n, self._head))
        if self.tail is not None:
            A, lam, K = self.tail.coef, self.tail.rate, self.K
            m += A * lam ** (K + 1) * ((K + 1) - K * lam) / (1.0 - lam) ** 2
        return m

    @cached_property
    def support_max(self) -> float:
        """Largest ``n`` with ``p(n) > 0`` (``inf`` when a tail is present)."""
        if self.tail is not None:
            return math.inf
        nz = np.nonzero(self._head > 0)[0]
        return int(nz[-1]) + 1

    def pmf(self, n: int) -> float:
        if n < 1:
            return 0.0
        if n <= self.K:
            return self.head[n - 1]
        if self.tail is None:
            return 0.0
        return self.tail.coef * self.tail.rate ** n

    def pmf_array(self, n_max: int) -> np.ndarray:
        """``p(1..n_max)`` as an array (index 0 holds ``p(1)``)."""
        out = np.zeros(n_max, dtype=np.float64)
        k = min(n_max, self.K)
        out[:k] = self._head[:k]
        if self.tail is not None and n_max > self.K:
            n = np.arange(self.K + 1, n_max + 1)
            out[self.K:] = self.tail.coef * self.tail.rate ** n
        return out

    def survival(self, n: int) -> float:
        """``P(T >= n)``."""
        if n < 1:
            return 1.0
        if n <= self.K:
            return float(self._head_survival[n - 1])
        if self.tail is None:
            return 0.0
        lam = self.tail.rate
        return self.tail.coef * lam ** n / (1.0 - lam)

    @property
    def tail_hazard(self) -> float | None:
        return None if self.tail is None else 1.0 - self.tail.rate

    def to_dict(self) -> dict[str, Any]:
        tail = None if self.tail is None else {"coef": self.tail.coef, "rate": self.tail.rate}
        return {"head": list(self.head), "tail": tail}

    def __repr__(self) -> str:
        head = ", ".join(f"{p:.6g}" for p in self.head[:6])
        more = ", ..." if self.K > 6 else ""
        return f"JumpDistribution(head=[{head}{more}], tail={self.tail})"


def load_jump_distribution(spec: dict | str | Path | None = None, *, head=None, tail=None,
                           tol: float = LOAD_TOL) -> JumpDistribution:
    """Validate and normalize a distribution description.

    ``spec`` may be a dict in the JSON file layout
    (``{"head": [...], "tail": {"coef": A, "rate": lam} | null}``) or a path
    to such a file.  ``head``/``tail`` keywords are an alternative; ``tail``
    may be a mapping or an ``(A, lam)`` pair.
    """
    if isinstance(spec, (str, Path)):
        spec = json.loads(Path(spec).read_text())
    if spec is not None:
        head = spec.get("head", [])
        tail = spec.get("tail")
    head = [float(p) for p in (head or [])]
    if isinstance(tail, dict):
        tail = (float(tail["coef"]), float(tail["rate"]))
    elif tail is not None:
        tail = (float(tail[0]), float(tail[1]))

    if any(p < 0 or math.isnan(p) for p in head):
        raise NegativeProbability(f"negative head probability in {head}")
    if tail is not None:
        A, lam = tail
        if not 0.0 < lam < 1.0:
            raise InvalidTailRate(f"tail rate must lie in (0,1), got {lam}")
        if A < 0:
            raise NegativeProbability(f"negative tail coefficient {A}")
        if A == 0:
            tail = None
    while head and head[-1] == 0.0 and tail is None:
        head.pop()

    raw = JumpDistribution(tuple(head), None if tail is None else GeometricTail(*tail))
    total = float(np.sum(raw._head)) + raw.tail_mass
    if total == 0.0:
        raise EmptySupport("distribution has no mass")
    if abs(total - 1.0) > tol:
        raise MassDeviation(f"total mass {total!r} deviates from 1 by more than {tol}")
    head = tuple(p / total for p in head)
    tail_obj = None if tail is None else GeometricTail(tail[0] / total, tail[1])
    return JumpDistribution(head, tail_obj)


def geometric(p: float) -> JumpDistribution:
    """``Geom(p)`` on the positive integers: ``P(T=n) = p (1-p)**(n-1)``."""
    return load_jump_distribution(head=[], tail=(p / (1.0 - p), 1.0 - p))


def hazard(d: JumpDistribution, n: int) -> float:
    """``P(T = n | T >= n)``."""
    if n > d.K and d.tail is not None:
        return 1.0 - d.tail.rate
    s = d.survival(n)
    if s <= 0.0:
        raise ZeroSurvival(f"P(T >= {n}) = 0")
    return d.pmf(n) / s


def hazard_table(d: JumpDistribution, n_max: int) -> np.ndarray:
    """Hazards ``h(1..n_max)``; entries with zero survival are ``nan``."""
    out = np.full(n_max, np.nan)
    for n in range(1, n_max + 1):
        try:
            out[n - 1] = hazard(d, n)
        except ZeroSurvival:
            break
    return out


@dataclass(frozen=True)
class CodabilityReport:
    non_lattice: bool
    exponential_tail: bool
    bounded: bool
    gcd: int

    @property
    def codable(self) -> bool:
        return self.non_lattice and self.exponential_tail


def validate_codable(d: JumpDistribution) -> CodabilityReport:
    """Check the necessary conditions for a finitary coding."""
    support = [n for n, p in enumerate(d.head, start=1) if p > 0]
    if d.tail is not None:
        # the tail charges n = K+1 and K+2, which are coprime
        support += [d.K + 1, d.K + 2]
    g = reduce(math.gcd, support, 0)
    return CodabilityReport(non_lattice=(g == 1), exponential_tail=True,
                            bounded=d.bounded, gcd=g)


@dataclass(frozen=True, eq=False)
class SizeBiased:
    """``P(T' = t) = t p(t) / E[T]`` with the tail kept in closed form."""

    base: JumpDistribution

    def pmf(self, t: int) -> float:
        return t * self.base.pmf(t) / self.base.mean

    def pmf_array(self, n_max: int) -> np.ndarray:
        n = np.arange(1, n_max + 1)
        return n * self.base.pmf_array(n_max) / self.base.mean

    def survival(self, m: int) -> float:
        """``P(T' >= m)``."""
        d = self.base
        if m <= 1:
            return 1.0
        total = 0.0
        if m <= d.K:
            n = np.arange(m, d.K + 1)
            total = float(np.dot(n, d._head[m - 1:]))
        if d.tail is not None:
            A, lam = d.tail.coef, d.tail.rate
            k = max(m, d.K + 1)
            total += A * lam ** k * (k - (k - 1) * lam) / (1.0 - lam) ** 2
        return total / d.mean


def size_biased(d: JumpDistribution) -> SizeBiased:
    return SizeBiased(d)


def sample_jumps(d: JumpDistribution, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draws of ``T`` from uniforms ``u``."""
    u = np.asarray(u, dtype=np.float64)
    cdf = np.cumsum(d._head) if d.K else np.zeros(0)
    out = np.searchsorted(cdf, u, side="right") + 1
    if d.tail is None:
        return np.minimum(out, d.support_max).astype(np.int64)
    in_tail = out > d.K
    if np.any(in_tail):
        lam = d.tail.rate
        # conditional on T > K, T - K is Geom(1 - lam)
        v = (u[in_tail] - (1.0 - d.tail_mass)) / d.tail_mass
        v = np.clip(v, 0.0, np.nextafter(1.0, 0.0))
        extra = np.floor(np.log1p(-v) / math.log(lam)).astype(np.int64) + 1
        out = out.astype(np.int64)
        out[in_tail] = d.K + extra
    return out.astype(np.int64)


def sample_size_biased(d: JumpDistribution, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draws of the size-biased law."""
    sb = SizeBiased(d)
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    K = d.K
    cdf = np.cumsum(sb.pmf_array(K)) if K else np.zeros(0)
    out = (np.searchsorted(cdf, u, side="right") + 1).astype(np.int64)
    if d.tail is None:
        return np.minimum(out, d.support_max)
    for k in np.nonzero(out > K)[0]:
        # find the smallest m > K with P(T' >= m + 1) <= 1 - u
        target = 1.0 - u[k]
        lo, hi = K + 1, K + 2
        while sb.survival(hi + 1) > target:
            lo, hi = hi, 2 * hi
        while lo < hi:
            mid = (lo + hi) // 2
            if sb.survival(mid + 1) > target:
                lo = mid + 1
            else:
                hi = mid
        out[k] = lo
    return out


def origin_blocks(d: JumpDistribution, rng: UniformStream, replicas) -> tuple[np.ndarray, np.ndarray]:
    """Block covering the origin for each replica.

    Returns ``(length, offset)`` where the block is
    ``[-offset, length - offset]``: the last renewal at or before 0 sits at
    ``-offset`` and the next one at ``length - offset``.
    """
    replicas = np.asarray(replicas, dtype=np.int64)
    length = sample_size_biased(d, rng.values(replicas, 0))
    offset = np.floor(rng.values(replicas, 1) * length).astype(np.int64)
    return length, np.minimum(offset, length - 1)


def sample_stationary_renewal(d: JumpDistribution, lo: int, hi: int,
                              rng: UniformStream | int = 0, replica: int = 0) -> np.ndarray:
    """Exact draw of a stationary renewal process on ``lo..hi``.

    Used as a law oracle only: the construction reads uniforms by draw
    number, not by position, so it is not a finitary coding.  Lattice laws
    are allowed here.
    """
    if isinstance(rng, int):
        rng = UniformStream(rng, ORACLE)
    length, offset = origin_blocks(d, rng, [replica])
    left = -int(offset[0])
    right = left + int(length[0])
    bits = np.zeros(hi - lo + 1, dtype=np.int8)
    draw = 2

    def mark(pos: np.ndarray) -> None:
        pos = pos[(pos >= lo) & (pos <= hi)]
        bits[pos - lo] = 1

    mark(np.array([left, right]))
    # forward from `right`, backward from `left`, drawing jumps in batches
    for start, sign, bound in ((right, 1, hi), (left, -1, lo)):
        pos = start
        while sign * (bound - pos) > 0:
            need = max(16, int(abs(bound - pos) / d.mean * 1.1) + 16)
            u = rng.values(np.full(need, replica), np.arange(draw, draw + need))
            draw += need
            pts = pos + sign * np.cumsum(sample_jumps(d, u))
            mark(pts)
            pos = int(pts[-1])
    return bits


def gaps_from_bits(bits: np.ndarray) -> np.ndarray:
    """Distances between consecutive ones."""
    return np.diff(np.flatnonzero(np.asarray(bits)))
