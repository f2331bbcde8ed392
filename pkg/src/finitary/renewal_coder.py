"""Coding a stationary renewal process from i.i.d. uniforms.

The age chain ``Z_i = 1 + (distance to the last renewal at or before i)``
moves from state ``n`` to 1 with probability ``h(n)`` (the hazard) and to
``n + 1`` otherwise.  All copies of the chain are driven by the same
uniforms: from ``n`` at time ``i - 1`` go to 1 iff ``Y_i <= h(n)``.

With ``a = inf_{n >= n0} h(n)`` and ``b = max_{n <= 2 n0} h(n)`` the event

    E_i = {Y_{i-n0} <= a} & {Y_{i-n0+1}, ..., Y_{i-1} > b} & {Y_i <= a}

forces every copy started before ``i - n0`` into state 1 at time ``i``.
So ``Z_j`` is the chain started in state 1 at the last such ``i <= j``; it
depends only on ``Y`` over ``[I(j) - n0, j]``.

Bounded jump laws have no such ``a`` and go through coupling from the past
(:func:`cftp_code_bounded`).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .dist_core import JumpDistribution, hazard, validate_codable
from .errors import (
    BoundedJump,
    CftpBudgetExceeded,
    HazardVanishes,
    LatticeJump,
    ScanBudgetExceeded,
)
from .streams import CFTP_BASE, UniformStream

EPS_FLOOR = 1e-6
DEFAULT_CFTP_CAP = 1 << 40


@dataclass(frozen=True, eq=False)
class CoderParams:
    n0: int
    a: float
    b: float
    hazard_table: tuple[float, ...]  # h(1..len); beyond that the tail hazard
    tail_hazard: float

    @property
    def event_prob(self) -> float:
        """``P(E_i) = a**2 (1-b)**(n0-1)``."""
        return self.a ** 2 * (1.0 - self.b) ** (self.n0 - 1)

    @cached_property
    def _hz(self) -> list[float]:
        return [0.0, *self.hazard_table]

    def h(self, n: int) -> float:
        return self._hz[n] if n < len(self._hz) else self.tail_hazard

    def default_budget(self) -> int:
        return 10 ** 6 * (self.n0 + 1)


def build_coder_params(d: JumpDistribution, eps_floor: float = EPS_FLOOR) -> CoderParams:
    """Pick ``n0`` and the thresholds ``a``, ``b`` for the regeneration events.

    ``n0`` is the least ``m`` with ``inf_{n >= m} h(n) >= max(eps_floor, h_inf / 2)``
    where ``h_inf`` is the tail hazard.
    """
    rep = validate_codable(d)
    if not rep.non_lattice:
        raise LatticeJump(f"jump distribution is lattice (gcd {rep.gcd})")
    if d.tail is None:
        raise BoundedJump("bounded jump distribution: use the CFTP coder")
    h_inf = d.tail_hazard
    threshold = max(eps_floor, h_inf / 2.0)
    if h_inf < threshold:
        raise HazardVanishes(f"tail hazard {h_inf} is below the floor {eps_floor}")
    K = d.K
    hz = [hazard(d, n) for n in range(1, K + 1)]
    # walk down from K+1 while every hazard from m onwards clears the threshold
    n0 = K + 1
    run_min = h_inf
    while n0 > 1 and hz[n0 - 2] >= threshold:
        n0 -= 1
        run_min = min(run_min, hz[n0 - 1])
    a = run_min
    table = [hazard(d, n) for n in range(1, max(K, 2 * n0) + 1)]
    b = max(table[: 2 * n0])
    if not b < 1.0:
        raise HazardVanishes(f"b = {b} is not below 1; states up to 2*n0 are not transient enough")
    if not 0.0 < a <= b:
        raise HazardVanishes(f"invalid thresholds a={a}, b={b}")
    return CoderParams(n0=n0, a=a, b=b, hazard_table=tuple(table), tail_hazard=h_inf)


def scan_regeneration(y, j: int, params: CoderParams, budget: int | None = None) -> int:
    """``I(j) = max{i <= j : E_i}``.

    Reads ``Y_j, Y_{j-1}, ...`` one at a time and stops as soon as an event
    is confirmed, so the indices read are exactly ``[I(j) - n0, j]``.
    """
    n0, a, b = params.n0, params.a, params.b
    if budget is None:
        budget = params.default_budget()
    # recent[k] holds Y_{pos+k} for the last n0+1 positions read
    recent: list[float] = []
    # count of consecutive values > b immediately right of the current position
    above = 0
    pos = j
    for _ in range(budget):
        v = y.value(pos)
        recent.insert(0, v)
        if len(recent) > n0 + 1:
            recent.pop()
        if len(recent) == n0 + 1 and v <= a and recent[n0] <= a and above >= n0 - 1:
            return pos + n0
        above = above + 1 if v > b else 0
        pos -= 1
    raise ScanBudgetExceeded(f"no regeneration event within {budget} indices left of {j}")


def event_mask(yv: np.ndarray, params: CoderParams) -> np.ndarray:
    """``mask[k]`` is ``E_{lo + n0 + k}`` for uniforms ``yv`` on ``lo..hi``."""
    n0, a, b = params.n0, params.a, params.b
    low = yv <= a
    m = yv.size - n0
    if m <= 0:
        return np.zeros(0, dtype=bool)
    ok = low[:m] & low[n0:]
    if n0 > 1:
        # no value <= b strictly between the two endpoints
        c = np.concatenate(([0], np.cumsum(yv <= b)))
        inner = c[n0:n0 + m] - c[1:1 + m]
        ok &= inner == 0
    return ok


@dataclass
class CodedSample:
    lo: int
    hi: int
    bits: np.ndarray
    windows: np.ndarray
    regen_times: np.ndarray
    states: np.ndarray | None = None

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)


def code_renewal_range(y, lo: int, hi: int, params: CoderParams,
                       d: JumpDistribution | None = None, budget: int | None = None) -> CodedSample:
    """Code ``X_lo..X_hi`` in one left-to-right pass.

    Agrees exactly with coding each index separately: at every event time
    ``i`` the running chain is in state 1, as is the chain restarted there.
    """
    n0 = params.n0
    start = scan_regeneration(y, lo, params, budget)
    base = start - n0
    yv = np.asarray(y.range(base, hi), dtype=np.float64)
    ev = np.zeros(yv.size, dtype=bool)
    ev[n0:] = event_mask(yv, params)
    idx = np.arange(base, hi + 1)
    last = np.where(ev, idx, np.iinfo(np.int64).min)
    regen = np.maximum.accumulate(last)
    z = _run_chain(yv[start - base:].tolist(), params)
    off = lo - start
    z = z[off:]
    regen = regen[lo - base:]
    bits = (z == 1).astype(np.int8)
    windows = np.arange(lo, hi + 1) - regen + n0
    return CodedSample(lo, hi, bits, windows.astype(np.int64), regen.astype(np.int64), states=z)


def _run_chain(ys: list[float], params: CoderParams) -> np.ndarray:
    """Age chain from state 1 at ``ys[0]``'s time, driven by ``ys[1:]``."""
    hz = params._hz
    cap = len(hz)
    tail = params.tail_hazard
    out = [1] * len(ys)
    n = 1
    for k in range(1, len(ys)):
        h = hz[n] if n < cap else tail
        n = 1 if ys[k] <= h else n + 1
        out[k] = n
    return np.asarray(out, dtype=np.int64)


def code_renewal_index(y, j: int, params: CoderParams, budget: int | None = None) -> tuple[int, int, int]:
    """Per-index definition: ``(bit, window, I(j))``."""
    i = scan_regeneration(y, j, params, budget)
    n = 1
    for k in range(i + 1, j + 1):
        n = 1 if y.value(k) <= params.h(n) else n + 1
    return int(n == 1), j - i + params.n0, i


def run_copy(y, t: int, s: int, i: int, params: CoderParams) -> int:
    """State at time ``i`` of the copy started in state ``s`` at time ``t``."""
    n = s
    for k in range(t + 1, i + 1):
        n = 1 if y.value(k) <= params.h(n) else n + 1
    return n


def verify_coalescence(y, i: int, params: CoderParams, starts) -> bool:
    """Run every ``(t, s)`` copy to time ``i`` and check they all sit at 1.

    All copies are advanced together on the shared uniforms.  Only
    meaningful when ``E_i`` holds and every ``t < i - n0``.
    """
    starts = list(starts)
    if not starts:
        return True
    t0 = min(t for t, _ in starts)
    yv = np.asarray(y.range(t0 + 1, i), dtype=np.float64)
    times = np.array([t for t, _ in starts], dtype=np.int64)
    state = np.array([s for _, s in starts], dtype=np.int64)
    hz = np.asarray(params._hz)
    cap = hz.size
    for k in range(t0 + 1, i + 1):
        live = times < k
        if not live.any():
            continue
        n = state[live]
        h = np.where(n < cap, hz[np.minimum(n, cap - 1)], params.tail_hazard)
        state[live] = np.where(yv[k - t0 - 1] <= h, 1, n + 1)
    return bool(np.all(state == 1))


# --- coupling from the past for bounded jumps ---------------------------------


def _bounded_hazards(d: JumpDistribution) -> np.ndarray:
    rep = validate_codable(d)
    if not rep.non_lattice:
        raise LatticeJump(f"jump distribution is lattice (gcd {rep.gcd})")
    if not d.bounded:
        raise ValueError("CFTP coder needs a bounded jump distribution")
    K = int(d.support_max)
    return np.array([hazard(d, n) for n in range(1, K + 1)])


def _cftp_streams(y, K: int) -> list:
    seed = getattr(y, "seed", None)
    if seed is None:
        raise TypeError("CFTP needs a UniformStream (per-state streams are derived from its seed)")
    return [UniformStream(seed, CFTP_BASE + n) for n in range(1, K + 1)]


def cftp_code_bounded(d: JumpDistribution, y, j: int, cap: int = DEFAULT_CFTP_CAP) -> tuple[int, int]:
    """``(bit, window)`` for index ``j`` by coupling from the past.

    Each state ``n`` has its own stream; a chain in state ``n`` at time
    ``k - 1`` goes to 1 iff ``U_n(k) <= h(n)``.  Starting times
    ``j - 1, j - 2, j - 4, ...`` are tried until all ``K`` states coalesce
    by time ``j``; the window is the look-back that succeeded.
    """
    hz = _bounded_hazards(d)
    K = hz.size
    streams = _cftp_streams(y, K)
    T = 1
    while T <= cap:
        u = np.stack([s.range(j - T + 1, j) for s in streams])
        state = np.arange(1, K + 1)
        for k in range(T):
            uk = u[state - 1, k]
            state = np.where(uk <= hz[state - 1], 1, state + 1)
        if np.all(state == state[0]):
            return int(state[0] == 1), T
        T *= 2
    raise CftpBudgetExceeded(f"no coalescence within look-back {cap}")


def cftp_code_range(d: JumpDistribution, y, lo: int, hi: int,
                    cap: int = DEFAULT_CFTP_CAP) -> CodedSample:
    """:func:`cftp_code_bounded` for every index of ``lo..hi``, vectorized."""
    hz = _bounded_hazards(d)
    K = hz.size
    streams = _cftp_streams(y, K)
    js = np.arange(lo, hi + 1, dtype=np.int64)
    bits = np.zeros(js.size, dtype=np.int8)
    windows = np.zeros(js.size, dtype=np.int64)
    todo = np.arange(js.size)
    T = 1
    while todo.size:
        if T > cap:
            raise CftpBudgetExceeded(f"no coalescence within look-back {cap}")
        # u[n][k, m] = U_{n+1}(js[todo[m]] - T + 1 + k)
        tgt = js[todo]
        times = tgt[None, :] - T + 1 + np.arange(T)[:, None]
        u = np.stack([s.values(times) for s in streams])
        state = np.broadcast_to(np.arange(1, K + 1)[:, None], (K, todo.size)).copy()
        cols = np.arange(todo.size)[None, :]
        for k in range(T):
            uk = u[state - 1, k, cols]
            state = np.where(uk <= hz[state - 1], 1, state + 1)
        done = np.all(state == state[0], axis=0)
        bits[todo[done]] = (state[0, done] == 1)
        windows[todo[done]] = T
        todo = todo[~done]
        T *= 2
    return CodedSample(lo, hi, bits, windows, js - windows)
