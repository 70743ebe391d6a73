import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from needlet_ustat import frame as fr
from needlet_ustat import ustat as us
from needlet_ustat.errors import InvalidParameterError, RegimeError, ResourceError, TruncationError


def test_elementary_symmetric_hand_value():
    v = np.array([1.0, 2.0, 3.0])
    p = np.array([[np.sum(v**m)] for m in (1, 2, 3)])
    e = us.elementary_from_power_sums(p)[:, 0]
    assert 2 * e[2] == 22
    assert e[3] == 6


@given(st.lists(st.floats(-3, 3), min_size=0, max_size=7), st.integers(1, 4))
def test_elementary_symmetric_against_enumeration(vals, n):
    import itertools
    v = np.array(vals, dtype=float)
    p = np.array([[np.sum(v**m)] for m in range(1, n + 1)])
    e = us.elementary_from_power_sums(p)[n, 0]
    ref = sum(math.prod(c) for c in itertools.combinations(vals, n))
    assert abs(e - ref) <= 1e-9 * max(1.0, sum(abs(math.prod(c)) for c in itertools.combinations(vals, n)))


def test_fast_path_matches_brute_force(tiny_frame):
    rng = np.random.default_rng(0)
    x = 2 * math.pi * rng.random(8)
    fast = us.ustat_from_points(tiny_frame, 2, x, 3)
    slow = us.brute_force_ustat(tiny_frame, x, 2, 3)
    assert abs(fast - slow) <= 1e-9 * abs(slow)
    dense = us.ustat_from_points(tiny_frame, 2, x, 3, method="dense")
    assert abs(dense - slow) <= 1e-9 * abs(slow)


def test_linear_statistic_and_empty(tiny_frame):
    x = np.array([0.1, 1.7, 4.0])
    assert abs(us.ustat_from_points(tiny_frame, 2, x, 1) - tiny_frame.evaluate(2, x).sum()) < 1e-12
    assert us.ustat_from_points(tiny_frame, 2, x, 4) == 0.0
    assert us.ustat_from_points(tiny_frame, 2, np.zeros(0), 2) == 0.0
    with pytest.raises(InvalidParameterError):
        us.ustat_from_points(tiny_frame, 2, x, 0)


def test_gram_uniform_properties(frame8, uniform8):
    g = us.compute_gram(frame8, uniform8, 4, fourth=False)
    d = np.diag(g.G)
    assert np.max(np.abs(d - d[0])) < 1e-8
    assert np.array_equal(g.G, g.G.T)
    assert np.linalg.eigvalsh(g.G).min() >= -1e-8
    assert np.all(g.beta == 0)


def test_gram_row_sums_and_diagonal(frame8, besov8):
    j = 4
    g = us.compute_gram(frame8, besov8, j, fourth=False)
    # summed integrand on an independent oversampled grid
    nodes, w = frame8.manifold.uniform_rule(16 * frame8.K(j) + 1)
    V = frame8.evaluate(j, nodes)
    ref = (V * (w * besov8(nodes))) @ V.sum(axis=0)
    assert np.max(np.abs(g.G.sum(axis=1) - ref)) < 1e-8
    nsq = fr.lp_norm(frame8, j, 0, 2) ** 2
    d = np.diag(g.G)
    assert np.all(d >= besov8.f_min * nsq - 1e-12) and np.all(d <= besov8.f_max * nsq + 1e-12)
    assert np.linalg.eigvalsh(g.G).min() >= -1e-8


def test_fourth_moments_and_truncation(frame8, besov8):
    g = us.compute_gram(frame8, besov8, 3, truncation_radius=24)
    assert g.complete
    for t in [(0, 0, 0, 0), (1, 2, 3, 4), (5, 3, 7, 5)]:
        assert abs(g.fourth_moment(*t) - g.fourth_moment_direct(*t)) < 1e-12
    with pytest.raises(TruncationError, match="larger truncation_radius"):
        us.compute_gram(frame8, besov8, 5, truncation_radius=1, tol=1e-8)
    with pytest.raises(ResourceError):
        us.compute_gram(frame8, besov8, 5, memory_budget=1e3)
    with pytest.raises(InvalidParameterError):
        us.compute_gram(frame8, besov8, 5, truncation_radius=0)


def test_variance_single_chaos(frame8, besov8):
    # above level 0 the needlets of one level sum to zero, so n = 1 is degenerate there
    with pytest.raises(InvalidParameterError, match="degenerate"):
        us.exact_variance(us.compute_gram(frame8, besov8, 3, fourth=False), 70.0, 1, 3)
    g = us.compute_gram(frame8, besov8, 0, fourth=False)
    rep = us.exact_variance(g, 70.0, 1, 0)
    assert math.isclose(rep.sigma_sq, 70.0 * g.G.sum(), rel_tol=1e-12)
    assert math.isclose(rep.mean, 70.0 * g.beta.sum(), rel_tol=1e-12, abs_tol=1e-12)


def test_variance_against_dense_grid_chaos(frame8, besov8):
    j, n, R = 3, 3, 40.0
    rep = us.exact_variance(us.compute_gram(frame8, besov8, j, fourth=False), R, n, j)
    nodes, w = frame8.manifold.uniform_rule(24 * frame8.K(j) + 1)
    V = frame8.evaluate(j, nodes)
    fw = w * besov8(nodes)
    G = (V * fw) @ V.T
    beta = V @ fw
    for p in range(1, n + 1):
        b = beta ** (n - p)
        ref = math.factorial(p) * math.comb(n, p) ** 2 * R ** (2 * n - p) * float(b @ G**p @ b)
        assert math.isclose(rep.chaos_norms[p - 1], ref, rel_tol=1e-9)
    assert math.isclose(rep.sigma_sq, float(np.sum(rep.chaos_norms)), rel_tol=1e-15)


def test_report_invariant_and_normalization(frame8, besov8):
    rep = us.exact_variance(us.compute_gram(frame8, besov8, 3, fourth=False), 50.0, 2, 3)
    v = rep.mean + 2 * math.sqrt(rep.sigma_sq)
    assert abs(rep.with_value(v).normalized - 2.0) < 1e-12
    with pytest.raises(AssertionError):
        us.UStatReport(3, 2, 50.0, 0.0, 1.0, np.array([0.2, 0.3]))
    with pytest.raises(InvalidParameterError):
        us.exact_variance(us.compute_gram(frame8, besov8, 3, fourth=False), 0.0, 2)


def test_chaos_lambda_examples():
    R, B, s, d, n, j = 300.0, 2.0, 1.0, 1, 4, 5
    lam = us.chaos_lambda(R, B, s, d, n, j)
    assert math.isclose(lam[n - 1], R**n * B ** (j * d), rel_tol=1e-12)
    assert math.isclose(lam[0], R ** (2 * n - 1) * B ** (-j * (s * (2 * n - 2) + d * (n - 2))), rel_tol=1e-12)
    assert math.isclose(lam[0] / lam[2], (R * B ** (-j * (2 * s + d))) ** 2, rel_tol=1e-12)
    # log space keeps huge values finite
    assert np.all(np.isfinite(us.chaos_lambda_log(1e200, 2.0, 1.0, 1, 6, 3)))


@pytest.mark.parametrize("schedule, expected", [
    (lambda j: 2.0 ** (3 * j) * 2.0**j, us.Dominance.FirstChaos),
    (lambda j: 2.0**j * j, us.Dominance.LastChaos),
    (lambda j: 2.0 ** (3 * j), us.Dominance.AllEquivalent),
])
def test_classify_dominance(schedule, expected):
    assert us.classify_dominance(schedule, 2.0, 1.0, 1, 2, range(2, 7)) is expected


def test_classify_dominance_ambiguous():
    wiggle = lambda j: 2.0 ** (3 * j) * (8.0 if j % 2 else 1.0)
    with pytest.raises(RegimeError, match="does not determine a regime"):
        us.classify_dominance(wiggle, 2.0, 1.0, 1, 2, range(2, 7))


def test_dominance_consistency(circle):
    frame = fr.build_frame(circle, 2.0, 10)
    from needlet_ustat import density as dn
    dens = dn.build_besov_density(frame, s=1.0, r=2.0, amplitude=0.3, seed=11)
    first, last = [], []
    for j in (3, 5, 7):
        g = us.compute_gram(frame, dens, j, fourth=False)
        a = us.exact_variance(g, 2.0 ** (3 * j) * 2.0 ** (2 * j), 2, j)
        b = us.exact_variance(g, 2.0**j * j, 2, j)
        first.append(a.chaos_norms[0] / a.sigma_sq)
        last.append(b.chaos_norms[-1] / b.sigma_sq)
    assert first[-1] > 0.9 and first[-1] > first[0]
    assert last[-1] > 0.9 and last[-1] >= last[0]
