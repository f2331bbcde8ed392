import numpy as np
import pytest

from finitary.dist_core import geometric, load_jump_distribution


def geom_half():
    return geometric(0.5)


def geom_quarter():
    return geometric(0.25)


def unif12():
    return load_jump_distribution(head=[0.5, 0.5])


def zero_first_hazard():
    # p(2) = 1/2, p(n) = 2**(1-n) for n >= 3
    return load_jump_distribution(head=[0.0, 0.5], tail=(2.0, 0.5))


def late_start():
    # hazards 0, 0, 0.3, 0.2/0.7, then 0.4 forever
    lam = 0.6
    return load_jump_distribution(head=[0.0, 0.0, 0.3, 0.2], tail=(0.5 * (1 - lam) / lam ** 5, lam))


@pytest.fixture
def rng_np():
    return np.random.default_rng(12345)


def compositions(L, support):
    """All ordered tuples of support values summing to L."""
    if L == 0:
        return [()]
    return [(t, *rest) for t in support if t <= L for rest in compositions(L - t, support)]


def composition_weights(d, mu, L):
    """Unnormalized ``mu (1-mu)**(N-1) prod p(t_i)`` over compositions of L."""
    support = [t for t in range(1, L + 1) if d.pmf(t) > 0]
    weights = {}
    for comp in compositions(L, support):
        w = mu * (1 - mu) ** (len(comp) - 1)
        for t in comp:
            w *= d.pmf(t)
        weights[comp] = w
    return weights


def brute_force_tstar(d, mu, n_max):
    """sum_N mu (1-mu)**(N-1) p^{*N}(n) by repeated convolution."""
    p = np.zeros(n_max + 1)
    for n in range(1, n_max + 1):
        p[n] = d.pmf(n)
    q = np.zeros(n_max + 1)
    conv = p.copy()
    for N in range(1, n_max + 1):
        q += mu * (1 - mu) ** (N - 1) * conv
        conv = np.convolve(conv, p)[: n_max + 1]
    return q[1:]


# --- acceptance reporting ----------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def acceptance():
    """``record(number, title, passed, detail)`` for the summary lines."""

    def record(number, title, passed, detail):
        _ACCEPTANCE[number] = (title, bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})")
