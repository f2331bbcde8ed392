"""End-to-end coding of a renewal process with an arbitrary codable jump law.

``T`` is replaced by ``T*_mu``, whose hazard settles at ``(nu - 1) / nu``;
the ``T*_mu`` process is coded with the regeneration coder and then
undiluted back to ``T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dilution import make_plan, points_to_bits, undilute
from .dist_core import JumpDistribution, validate_codable
from .errors import LatticeInput
from .gf_analysis import GfReport, choose_mu
from .renewal_coder import CoderParams, build_coder_params, code_renewal_range
from .streams import FILL, Z_CHAIN, UniformStream


@dataclass(frozen=True, eq=False)
class RenewalPipeline:
    d: JumpDistribution
    gf: GfReport
    Tstar: JumpDistribution
    params: CoderParams

    @property
    def mu(self) -> float:
        return self.gf.mu


def prepare_renewal(d: JumpDistribution, mu: float = 0.5) -> RenewalPipeline:
    """Choose ``mu`` (halving from the given value until feasible) and build
    the ``T*_mu`` coder."""
    rep = validate_codable(d)
    if not rep.non_lattice:
        raise LatticeInput(f"jump distribution is lattice (gcd {rep.gcd})")
    gf, Tstar = choose_mu(d, mu)
    return RenewalPipeline(d, gf, Tstar, build_coder_params(Tstar))


@dataclass
class Skeleton:
    lo: int
    hi: int
    star: np.ndarray  # coded T*_mu points, from the last one <= lo to the first one >= hi
    points: np.ndarray  # undiluted T points over the same span
    windows: np.ndarray  # composed coding windows for lo..hi

    def bits(self) -> np.ndarray:
        return points_to_bits(self.points, self.lo, self.hi)


def code_skeleton(seed: int, lo: int, hi: int, T: JumpDistribution, mu: float,
                  params: CoderParams, budget: int | None = None) -> Skeleton:
    """Code the ``T`` renewal points around ``lo..hi``.

    The window at ``n`` is ``(v - u) + max(R_u, R_v)`` with ``u <= n <= v``
    the bracketing ``T*_mu`` points and ``R`` their coding windows: every
    uniform used for ``n`` lies in ``[u - R_u, v]``.
    """
    zs = UniformStream(seed, Z_CHAIN)
    ext = 64
    while True:
        cs = code_renewal_range(zs, lo - ext, hi + ext, params, budget=budget)
        star = np.flatnonzero(cs.bits) + cs.lo
        if star.size and star[0] <= lo and star[-1] >= hi:
            break
        ext *= 2
    first = np.searchsorted(star, lo, side="right") - 1
    last = np.searchsorted(star, hi, side="left")
    star = star[first:last + 1]
    points = undilute(star, make_plan(T, mu, 64), UniformStream(seed, FILL))

    R = cs.windows[star - cs.lo]
    pos = np.arange(lo, hi + 1)
    right = np.searchsorted(star, pos, side="left")
    left = np.where(star[right] == pos, right, right - 1)
    windows = (star[right] - star[left]) + np.maximum(R[left], R[right])
    return Skeleton(lo, hi, star, points, windows.astype(np.int64))


def code_renewal_pipeline(d: JumpDistribution, seed: int, lo: int, hi: int, mu: float = 0.5,
                          pipeline: RenewalPipeline | None = None,
                          budget: int | None = None) -> tuple[Skeleton, RenewalPipeline]:
    if pipeline is None:
        pipeline = prepare_renewal(d, mu)
    sk = code_skeleton(seed, lo, hi, pipeline.d, pipeline.mu, pipeline.params, budget)
    return sk, pipeline
