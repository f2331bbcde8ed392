import math

import numpy as np
import pytest

from finitary.dist_core import geometric, load_jump_distribution, sample_jumps
from finitary.errors import TooFewSamples
from finitary.renewal_coder import build_coder_params, code_renewal_range
from finitary.streams import ORACLE, Z_CHAIN, UniformStream
from finitary.verify import (
    chi_square_gaps,
    density_check,
    fit_window_tail,
    geometric_reference,
    independence_lag,
    jump_variance,
    pooled_bins,
)

from conftest import geom_half, late_start, unif12


def draws(d, n, seed):
    return sample_jumps(d, UniformStream(seed, ORACLE).range(0, n - 1))


def test_chi_square_two_bin_closed_form():
    gaps = np.array([1] * 600 + [2] * 400)
    res = chi_square_gaps(gaps, unif12())
    assert res.bins == [(1, 1), (2, None)]
    assert res.statistic == pytest.approx((600 - 500) ** 2 / 500 + (400 - 500) ** 2 / 500, abs=1e-12)
    assert res.dof == 1


def test_chi_square_exact_draws_pass():
    assert chi_square_gaps(draws(unif12(), 10 ** 6, 1), unif12()).p_value > 1e-3


def test_chi_square_mismatch_fails():
    res = chi_square_gaps(draws(geom_half(), 10 ** 6, 2), geometric(1 / 3))
    assert res.p_value < 1e-6


def test_chi_square_too_few():
    with pytest.raises(TooFewSamples):
        chi_square_gaps(np.ones(100, dtype=int), unif12())


def test_chi_square_impossible_value():
    gaps = np.array([1, 2] * 600 + [3])
    res = chi_square_gaps(gaps, unif12())
    assert res.p_value == 0.0 and not res.passed()


def test_pooled_bins_expected_counts():
    d = late_start()
    n = 5000
    for lo, hi in pooled_bins(d, n):
        mass = d.survival(lo) if hi is None else sum(d.pmf(t) for t in range(lo, hi + 1))
        assert mass * n >= 5


def test_fit_window_tail_geometric():
    rho = 1 / 16
    w = draws(geometric(rho), 10 ** 5, 3)
    fit = fit_window_tail(w)
    assert abs(fit.slope - math.log1p(-rho)) < 0.1 * abs(math.log1p(-rho))
    assert fit.passed()


def test_fit_window_tail_degenerate():
    fit = fit_window_tail(np.full(20_000, 4))
    assert fit.degenerate and not fit.passed()


def test_fit_window_tail_too_few():
    with pytest.raises(TooFewSamples):
        fit_window_tail(np.arange(100))


def test_fit_window_tail_coded_dominated():
    p = build_coder_params(geometric(0.25))
    cs = code_renewal_range(UniformStream(4, Z_CHAIN), 0, 200_000, p)
    fit = fit_window_tail(cs.windows, p)
    assert fit.r2 > 0.98 and fit.slope < 0
    assert fit.dominance_ratio <= 2.0
    assert fit.geometric_bound_rate == p.event_prob


def test_geometric_reference_shape():
    p = build_coder_params(late_start())
    r = np.arange(0, 30)
    ref = geometric_reference(r, p)
    assert np.all(ref[: p.n0 + 1] == 1.0)
    assert np.all(np.diff(ref) <= 0)


def test_independence_lag():
    assert independence_lag(draws(unif12(), 10 ** 5, 5)).passed
    rep = independence_lag(np.tile([1, 2], 10_000))
    assert not rep.passed
    assert rep.rho[0] == pytest.approx(-1.0, abs=1e-3)
    assert independence_lag(np.full(20_000, 3)).passed
    with pytest.raises(TooFewSamples):
        independence_lag(np.ones(50))


def test_jump_variance_and_density():
    assert jump_variance(unif12()) == pytest.approx(0.25, abs=1e-12)
    assert jump_variance(geom_half()) == pytest.approx(2.0, abs=1e-9)
    bits = np.tile([1, 0, 1], 1000)
    chk = density_check(bits, unif12())
    assert chk.target == pytest.approx(2 / 3) and chk.passed


def test_verify_deterministic():
    g = draws(late_start(), 20_000, 6)
    a, b = chi_square_gaps(g, late_start()), chi_square_gaps(g.copy(), late_start())
    assert a == b
