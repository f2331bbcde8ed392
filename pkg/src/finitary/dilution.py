"""Thinning of renewal points and its exact inverse.

Thinning keeps each renewal point independently with probability ``mu`` and
turns jump law ``T`` into ``T*_mu``.  The inverse direction fills each block
of the thinned process with a composition drawn from the conditional law of
``(T_1, ..., T_N)`` given ``T_1 + ... + T_N = L``.  Given the thinned points
the blocks are conditionally independent, so every block is filled from its
own sub-stream keyed by the block's left endpoint.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .dist_core import JumpDistribution
from .errors import ImpossibleBlock
from .gf_analysis import pmf_Tstar
from .streams import FILL, UniformStream


def thin(x: np.ndarray, mu: float, rng, start: int = 0) -> np.ndarray:
    """Keep the 1 at position ``start + k`` iff ``rng.value(start + k) <= mu``."""
    x = np.asarray(x, dtype=np.int8)
    out = np.zeros_like(x)
    ones = np.flatnonzero(x)
    if ones.size:
        u = rng.values(ones + start, 0)
        out[ones[u <= mu]] = 1
    return out


@dataclass(frozen=True, eq=False)
class BlockFillPlan:
    """Cached ``P(T*_mu = n)`` table and the per-length jump CDFs.

    For remaining length ``r`` the next jump ``t`` is chosen with weight
    ``(1-mu) p(t) q(r-t) / q(r)`` for ``t < r`` and ``mu p(r) / q(r)`` for
    ``t = r`` (which ends the block).
    """

    d: JumpDistribution
    mu: float
    n_max: int

    @cached_property
    def q_table(self) -> np.ndarray:
        return pmf_Tstar(self.d, self.mu, self.n_max)

    @cached_property
    def cdf(self) -> np.ndarray:
        """``cdf[r, t-1]`` = P(next jump <= t | r remaining), rows r = 0..n_max."""
        n = self.n_max
        p = self.d.pmf_array(n)
        q = self.q_table
        w = np.zeros((n + 1, n), dtype=np.float64)
        for r in range(1, n + 1):
            if q[r - 1] <= 0.0:
                continue
            # t = 1..r-1 uses q(r-t) = q[r-t-1]
            if r > 1:
                w[r, : r - 1] = (1.0 - self.mu) * p[: r - 1] * q[r - 2 :: -1] / q[r - 1]
            w[r, r - 1] = self.mu * p[r - 1] / q[r - 1]
        return np.cumsum(w, axis=1)

    def covers(self, L: int) -> bool:
        return L <= self.n_max

    def extended(self, L: int) -> "BlockFillPlan":
        """A plan covering length ``L``, doubling capacity as needed."""
        if self.covers(L):
            return self
        n = self.n_max
        while n < L:
            n *= 2
        return BlockFillPlan(self.d, self.mu, n)


def make_plan(d: JumpDistribution, mu: float, n_max: int = 64) -> BlockFillPlan:
    return BlockFillPlan(d, mu, max(1, n_max))


def fill_blocks_flat(plan: BlockFillPlan, lengths, rng, anchors) -> tuple[np.ndarray, np.ndarray]:
    """Fill many blocks at once.

    The jumps of block ``k`` use ``rng.value(anchors[k], draw)`` for
    ``draw = 0, 1, ...``.  Returns the concatenated jumps (block by block,
    in order) and the number of jumps per block.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    anchors = np.asarray(anchors, dtype=np.int64)
    m = lengths.size
    if m == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    if lengths.min() < 1:
        raise ImpossibleBlock("block lengths must be positive")
    plan = plan.extended(int(lengths.max()))
    q = plan.q_table
    if np.any(q[lengths - 1] <= 0.0):
        L = int(lengths[np.flatnonzero(q[lengths - 1] <= 0.0)[0]])
        raise ImpossibleBlock(f"P(T*_mu = {L}) = 0")
    cdf = plan.cdf
    remaining = lengths.copy()
    active = np.arange(m)
    step_idx, step_t = [], []
    draw = 0
    while active.size:
        r = remaining[active]
        u = rng.values(anchors[active], draw)
        t = np.empty_like(r)
        for rv in np.unique(r):
            sel = r == rv
            # first t with u < cdf(t); rounding at the top is absorbed into t = r
            t[sel] = np.searchsorted(cdf[rv, :rv], u[sel], side="right") + 1
        t = np.minimum(t, r)
        step_idx.append(active)
        step_t.append(t)
        remaining[active] -= t
        active = active[remaining[active] > 0]
        draw += 1
    idx = np.concatenate(step_idx)
    jumps = np.concatenate(step_t)
    order = np.argsort(idx, kind="stable")
    counts = np.bincount(idx, minlength=m)
    jumps = jumps[order]
    sums = np.add.reduceat(jumps, np.concatenate(([0], np.cumsum(counts)[:-1])))
    if not np.array_equal(sums, lengths):
        raise AssertionError("block fill does not sum to the block length")
    return jumps, counts


def fill_blocks(plan: BlockFillPlan, lengths, rng, anchors) -> list[np.ndarray]:
    jumps, counts = fill_blocks_flat(plan, lengths, rng, anchors)
    return np.split(jumps, np.cumsum(counts)[:-1]) if counts.size else []


def fill_block(plan: BlockFillPlan, L: int, rng, anchor: int) -> tuple[int, ...]:
    """Composition ``(t_1, ..., t_N)`` of ``L`` from the conditional law."""
    return tuple(int(t) for t in fill_blocks_flat(plan, [L], rng, [anchor])[0])


def undilute(points, plan: BlockFillPlan, rng=None) -> np.ndarray:
    """Insert renewal points inside every gap of ``points``.

    Returns the sorted positions of the reconstructed process; the input
    points are all kept.  The gap ``[s, t]`` is filled from the uniforms
    at index ``s``.
    """
    points = np.asarray(points, dtype=np.int64)
    if rng is None:
        rng = UniformStream(0, FILL)
    if points.size < 2:
        return points.copy()
    jumps, _ = fill_blocks_flat(plan, np.diff(points), rng, points[:-1])
    return np.concatenate((points[:1], points[0] + np.cumsum(jumps)))


def points_to_bits(points, lo: int, hi: int) -> np.ndarray:
    points = np.asarray(points, dtype=np.int64)
    bits = np.zeros(hi - lo + 1, dtype=np.int8)
    sel = points[(points >= lo) & (points <= hi)]
    bits[sel - lo] = 1
    return bits
