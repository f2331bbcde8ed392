"""Coding a finite ergodic Markov chain from i.i.d. uniforms.

Pipeline: the visits to an anchor state ``s`` form a renewal process with
the return-time law ``T``.  That skeleton is coded through the compound
geometric ``T*_mu`` (regeneration coder, then block filling), and every
gap of length ``l`` is filled with an excursion from ``s`` back to ``s``
drawn from the exact conditional law given its length.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .dist_core import JumpDistribution, load_jump_distribution
from .errors import BadRows, ImpossibleLength, NotIrreducible, Periodic, TailNotResolved
from .gf_analysis import choose_mu
from .pipeline import code_skeleton
from .renewal_coder import CoderParams, build_coder_params
from .streams import EXCURSION, UniformStream

ROW_TOL = 1e-9
PI_TOL = 1e-12
RESIDUAL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    states: tuple
    P: sparse.csr_matrix
    pi: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.states)

    def index(self, state) -> int:
        return self.states.index(state)

    @property
    def dense(self) -> np.ndarray:
        return self.P.toarray()


def make_kernel(states: Sequence, rows) -> TransitionKernel:
    """Build a kernel from labels and rows.

    ``rows`` is either a dense matrix or a mapping
    ``{state: {state: prob}}``; keys are matched on ``str(label)`` so JSON
    input works for integer labels.  Rows are renormalized when within
    1e-9 of one.
    """
    states = tuple(states)
    n = len(states)
    if n == 0:
        raise BadRows("empty state space")
    lookup = {str(s): k for k, s in enumerate(states)}
    if isinstance(rows, dict):
        data, ri, ci = [], [], []
        for src, row in rows.items():
            if str(src) not in lookup:
                raise BadRows(f"unknown state {src!r}")
            for dst, p in row.items():
                if str(dst) not in lookup:
                    raise BadRows(f"unknown state {dst!r}")
                if p:
                    ri.append(lookup[str(src)])
                    ci.append(lookup[str(dst)])
                    data.append(float(p))
        M = sparse.csr_matrix((data, (ri, ci)), shape=(n, n))
    else:
        M = sparse.csr_matrix(np.asarray(rows, dtype=np.float64))
    if M.nnz and M.data.min() < 0:
        raise BadRows("negative transition probability")
    sums = np.asarray(M.sum(axis=1)).ravel()
    if np.any(np.abs(sums - 1.0) > ROW_TOL):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise BadRows(f"row {states[bad]!r} sums to {sums[bad]!r}")
    M = sparse.csr_matrix(sparse.diags(1.0 / sums) @ M)
    M.eliminate_zeros()
    return TransitionKernel(states, M)


def load_kernel(path: str | Path) -> TransitionKernel:
    spec = json.loads(Path(path).read_text())
    return make_kernel(spec["states"], spec["rows"])


@dataclass(frozen=True)
class ChainReport:
    irreducible: bool
    aperiodic: bool
    period: int
    pi: np.ndarray


def _period(P: sparse.csr_matrix) -> int:
    # gcd over edges of level(u) + 1 - level(v), levels from a BFS tree
    order, pred = breadth_first_order(P, 0, directed=True, return_predecessors=True)
    level = np.full(P.shape[0], -1)
    level[0] = 0
    for v in order[1:]:
        level[v] = level[pred[v]] + 1
    coo = P.tocoo()
    diffs = level[coo.row] + 1 - level[coo.col]
    return int(reduce(math.gcd, np.abs(diffs).tolist(), 0))


def stationary(P: sparse.csr_matrix, tol: float = PI_TOL, max_iter: int = 10 ** 6) -> np.ndarray:
    """Stationary vector by power iteration ``pi <- pi P``."""
    n = P.shape[0]
    pi = np.full(n, 1.0 / n)
    PT = P.T.tocsr()
    for _ in range(max_iter):
        nxt = PT @ pi
        nxt /= nxt.sum()
        if np.abs(nxt - pi).sum() < tol * 1e-2:
            return nxt
        pi = nxt
    raise RuntimeError("power iteration did not converge")


def validate_chain(k: TransitionKernel) -> ChainReport:
    n_comp, _ = connected_components(k.P, directed=True, connection="strong")
    if n_comp != 1:
        raise NotIrreducible(f"{n_comp} strongly connected components")
    period = _period(k.P)
    if period != 1:
        raise Periodic(f"chain has period {period}")
    pi = stationary(k.P)
    return ChainReport(True, True, period, pi)


def validated(k: TransitionKernel) -> TransitionKernel:
    """Copy of ``k`` with ``pi`` attached."""
    rep = validate_chain(k)
    return TransitionKernel(k.states, k.P, rep.pi)


def anchor_state(k: TransitionKernel):
    """State with the largest stationary mass; first in label order on ties."""
    pi = k.pi if k.pi is not None else validate_chain(k).pi
    return k.states[int(np.argmax(pi))]


@dataclass(frozen=True, eq=False)
class ExcursionTable:
    """``g[r, x]`` = P(chain from ``x`` first hits ``s`` after exactly ``r`` steps)."""

    anchor: int
    g: np.ndarray
    P: np.ndarray = field(repr=False)

    @property
    def horizon(self) -> int:
        return self.g.shape[0] - 1

    def extended(self, L: int) -> "ExcursionTable":
        if L <= self.horizon:
            return self
        n = max(L, 2 * self.horizon)
        return excursion_table_dense(self.P, self.anchor, n)


def excursion_table_dense(P: np.ndarray, s: int, L_max: int) -> ExcursionTable:
    S = P.shape[0]
    g = np.zeros((L_max + 1, S))
    g[1] = P[:, s]
    Q = P.copy()
    Q[:, s] = 0.0
    for r in range(2, L_max + 1):
        g[r] = Q @ g[r - 1]
    return ExcursionTable(s, g, P)


def excursion_table(k: TransitionKernel, s, L_max: int) -> ExcursionTable:
    return excursion_table_dense(k.dense, k.index(s), L_max)


def return_time_dist(k: TransitionKernel, s, L_max: int = 100_000,
                     tol: float = RESIDUAL_TOL) -> tuple[JumpDistribution, float]:
    """First-return law of ``s`` with an exact geometric tail grafted on.

    First-return probabilities are accumulated until the residual mass
    ``P(T > L)`` drops below ``tol``.  If it reaches exactly zero the law is
    bounded; otherwise the tail beyond ``L`` is ``A * lam**n`` with ``lam``
    the spectral radius of the taboo matrix (``P`` with column ``s``
    removed) and ``A`` matching the residual mass.  Returns the law and the
    residual mass.
    """
    P = k.dense
    si = k.index(s)
    Q = P.copy()
    Q[:, si] = 0.0
    g = P[:, si].copy()
    surv = 1.0 - g  # P_x(no hit in 1 step)
    f = [g[si]]
    resid = surv[si]
    L = 1
    while resid > tol and L < L_max:
        g = Q @ g
        surv = Q @ surv
        f.append(g[si])
        resid = surv[si]
        L += 1
    if resid > tol:
        raise TailNotResolved(f"residual return mass {resid:g} at L_max={L_max}")
    if resid <= 0.0:
        return load_jump_distribution(head=f), 0.0
    taboo = np.delete(np.delete(P, si, 0), si, 1)
    lam = float(np.max(np.abs(np.linalg.eigvals(taboo)))) if taboo.size else 0.0
    if not 0.0 < lam < 1.0:
        lam = min(max(f[-1] / f[-2] if len(f) > 1 and f[-2] > 0 else 0.5, 1e-12), 1 - 1e-12)
    A = resid * (1.0 - lam) / lam ** (L + 1)
    # the geometric tail must carry mass beyond L only
    return load_jump_distribution(head=f, tail=(A, lam)), resid


def sample_excursions_flat(tbl: ExcursionTable, lengths, rng, anchors) -> np.ndarray:
    """Excursions ``x_0 = s, ..., x_l = s`` for many lengths at once.

    From ``x`` with ``r`` steps left the next state is ``y != s`` with
    probability ``P(x, y) g_{r-1}(y) / g_r(x)``; with one step left it is
    ``s``.  Excursion ``k`` reads ``rng.value(anchors[k], step)``.

    Returns the concatenation of ``x_0..x_{l-1}`` over all excursions, so
    consecutive excursions tile the path without repeating ``s``.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    anchors = np.asarray(anchors, dtype=np.int64)
    m = lengths.size
    if m == 0:
        return np.zeros(0, dtype=np.int64)
    if lengths.min() < 1:
        raise ImpossibleLength("excursion lengths must be positive")
    tbl = tbl.extended(int(lengths.max()))
    s = tbl.anchor
    if np.any(tbl.g[lengths, s] <= 0.0):
        L = int(lengths[np.flatnonzero(tbl.g[lengths, s] <= 0.0)[0]])
        raise ImpossibleLength(f"no excursion of length {L}")
    P, g = tbl.P, tbl.g
    offsets = np.concatenate(([0], np.cumsum(lengths)[:-1]))
    flat = np.empty(int(lengths.sum()), dtype=np.int64)
    flat[offsets] = s
    cur = np.full(m, s)
    live = np.flatnonzero(lengths >= 2)
    step = 1
    while live.size:
        r = lengths[live] - step + 1  # steps left before this move
        x = cur[live]
        w = P[x] * g[r - 1]
        w[:, s] = 0.0
        cdf = np.cumsum(w, axis=1)
        u = rng.values(anchors[live], step - 1) * cdf[:, -1]
        # first column whose cdf exceeds u; it always carries positive weight
        nxt = np.sum(cdf <= u[:, None], axis=1)
        flat[offsets[live] + step] = nxt
        cur[live] = nxt
        step += 1
        live = live[lengths[live] > step]
    return flat


def sample_excursions(tbl: ExcursionTable, lengths, rng, anchors) -> list[np.ndarray]:
    """List form of :func:`sample_excursions_flat`, each path closed with ``s``."""
    lengths = np.asarray(lengths, dtype=np.int64)
    flat = sample_excursions_flat(tbl, lengths, rng, anchors)
    pieces = np.split(flat, np.cumsum(lengths)[:-1]) if lengths.size else []
    return [np.append(p, tbl.anchor) for p in pieces]


def sample_excursion(tbl: ExcursionTable, k: TransitionKernel | None, length: int, rng,
                     anchor_index: int) -> np.ndarray:
    """One excursion path of the given length, as state indices."""
    return sample_excursions(tbl, [length], rng, [anchor_index])[0]


ExcursionSampler = Callable[[ExcursionTable, np.ndarray, object, np.ndarray], np.ndarray]


@dataclass
class MarkovPipeline:
    """Everything derived from a kernel and anchor before any coding."""

    kernel: TransitionKernel
    anchor: int
    T: JumpDistribution
    mu: float
    Tstar: JumpDistribution
    params: CoderParams
    excursions: ExcursionTable
    sampler: ExcursionSampler = sample_excursions_flat


def prepare_markov(k: TransitionKernel, s=None, mu: float = 0.5,
                   sampler: ExcursionSampler = sample_excursions_flat) -> MarkovPipeline:
    if k.pi is None:
        k = validated(k)
    if s is None:
        s = anchor_state(k)
    T, _ = return_time_dist(k, s)
    rep, Tstar = choose_mu(T, mu)
    params = build_coder_params(Tstar)
    tbl = excursion_table(k, s, 64)
    return MarkovPipeline(k, k.index(s), T, rep.mu, Tstar, params, tbl, sampler)


@dataclass
class CodedChain:
    lo: int
    hi: int
    states: np.ndarray  # state indices into kernel.states
    windows: np.ndarray
    skeleton: np.ndarray  # renewal points of T within lo..hi
    kernel: TransitionKernel

    @property
    def labels(self) -> list:
        return [self.kernel.states[i] for i in self.states]


def code_markov_range(k: TransitionKernel, s=None, y: UniformStream | int = 0, lo: int = 0,
                      hi: int = 0, mu: float = 0.5, pipeline: MarkovPipeline | None = None,
                      budget: int | None = None) -> CodedChain:
    """Code ``M_lo..M_hi``.

    Windows follow the renewal skeleton (see :func:`finitary.pipeline.code_skeleton`);
    the excursion uniforms sit at skeleton points inside the same span.
    """
    if pipeline is None:
        pipeline = prepare_markov(k, s, mu)
    k = pipeline.kernel
    seed = y if isinstance(y, int) else y.seed
    if k.size == 1:
        # the output does not depend on the input at all
        n = hi - lo + 1
        return CodedChain(lo, hi, np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64),
                          np.arange(lo, hi + 1), k)
    sk = code_skeleton(seed, lo, hi, pipeline.T, pipeline.mu, pipeline.params, budget)
    pts = sk.points
    flat = pipeline.sampler(pipeline.excursions, np.diff(pts), UniformStream(seed, EXCURSION), pts[:-1])
    base = int(pts[0])
    full = np.append(flat, pipeline.anchor)
    states = full[lo - base: hi - base + 1]
    skel = pts[(pts >= lo) & (pts <= hi)]
    assert np.array_equal(np.flatnonzero(states == pipeline.anchor) + lo, skel)
    return CodedChain(lo, hi, states, sk.windows, skel, k)
