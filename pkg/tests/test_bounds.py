import math

import numpy as np
import pytest

from needlet_ustat import bounds as bd
from needlet_ustat import density as dn
from needlet_ustat import ustat as us
from needlet_ustat.errors import InvalidParameterError, TruncationError

# frozen from the direct nested-quadrature oracle: tiny frame (B=2, levels 0..3), j=1, R_t=50, n=2
UNIFORM_FROZEN = {"sigma_sq": 316.6286988823054, (2, 2, 1, 1): 0.08500000000000014,
                  (2, 2, 2, 1): 0.005000000000000011, ("l4", 2): 0.00019800000000000053}
SIGNED_FROZEN = {"sigma_sq": 1201.5983081403976, (2, 2, 1, 1): 0.00590202251562133,
                 (2, 2, 2, 1): 0.0003471777950365492, (1, 2, 1, 1): 0.038087016500242425,
                 ("l4", 1): 0.01718625522343535, ("l4", 2): 1.3877286658244293e-05}


@pytest.fixture(scope="module")
def signed_tiny(tiny_frame):
    # random signs without the fixed-point step keep every term of the tiny level nonzero
    return dn.build_besov_density(tiny_frame, 1.0, 2.0, 0.3, 3, j0=1, j_max=1, n_iter=0)


def _values(frame, density):
    gram = us.compute_gram(frame, density, 1)
    sig = us.exact_variance(gram, 50.0, 2, 1).sigma_sq
    out = {"sigma_sq": sig}
    for t in bd.admissible_indices(2):
        out[t] = bd.contraction_norm_sq(gram, 50.0, 2, 1, *t, sigma_sq=sig)
    for p in (1, 2):
        out[("l4", p)] = bd.l4_norm_4(gram, 50.0, 2, 1, p, sigma_sq=sig)
    return out


def test_index_sets():
    assert bd.max1_indices(1) == [] and bd.max2_indices(1) == []
    assert bd.max1_indices(2) == [(2, 2, 1, 1), (2, 2, 2, 1)]
    assert bd.max2_indices(2) == [(1, 2, 1, 1)]
    assert len(bd.max1_indices(3)) == 7 and len(bd.max2_indices(3)) == 5
    assert len(bd.admissible_indices(3)) == 12
    with pytest.raises(InvalidParameterError):
        bd.check_indices(1, 1, 1, 1, 1)
    with pytest.raises(InvalidParameterError):
        bd.check_indices(2, 2, 2, 2, 2)
    with pytest.raises(InvalidParameterError):
        bd.check_indices(3, 3, 2, 1, 1)


def test_uniform_tiny_frame_frozen(tiny_frame):
    got = _values(tiny_frame, dn.uniform_density(tiny_frame))
    assert math.isclose(got["sigma_sq"], UNIFORM_FROZEN["sigma_sq"], rel_tol=1e-12)
    for key, ref in UNIFORM_FROZEN.items():
        assert math.isclose(got[key], ref, rel_tol=1e-6), key
    # beta vanishes for the uniform density, so terms carrying beta do too
    assert got[(1, 2, 1, 1)] == 0.0 and got[("l4", 1)] == 0.0


def test_signed_tiny_frame_frozen_and_live_oracle(tiny_frame, signed_tiny):
    got = _values(tiny_frame, signed_tiny)
    for key, ref in SIGNED_FROZEN.items():
        assert math.isclose(got[key], ref, rel_tol=1e-6), key
    sig = got["sigma_sq"]
    for t in bd.admissible_indices(2):
        live = bd.direct_contraction_norm_sq(tiny_frame, signed_tiny, 50.0, 2, 1, *t, sig)
        assert math.isclose(got[t], live, rel_tol=1e-6)
    for p in (1, 2):
        assert math.isclose(got[("l4", p)], bd.direct_l4_norm_4(tiny_frame, signed_tiny, 50.0, 2, 1, p, sig),
                            rel_tol=1e-6)


def test_order_three_against_oracle(frame8, besov8):
    j, R = 2, 30.0
    gram = us.compute_gram(frame8, besov8, j)
    sig = us.exact_variance(gram, R, 3, j).sigma_sq
    for t in [(3, 3, 3, 1), (2, 3, 2, 2), (1, 3, 1, 1)]:
        a = bd.contraction_norm_sq(gram, R, 3, j, *t, sigma_sq=sig)
        b = bd.direct_contraction_norm_sq(frame8, besov8, R, 3, j, *t, sig)
        assert math.isclose(a, b, rel_tol=1e-6)
    a = bd.l4_norm_4(gram, R, 3, j, 3, sigma_sq=sig)
    assert math.isclose(a, bd.direct_l4_norm_4(frame8, besov8, R, 3, j, 3, sig), rel_tol=1e-6)


def test_incomplete_tensor_reports_truncation(frame8, besov8):
    gram = us.compute_gram(frame8, besov8, 2, truncation_radius=3, tol=1.0)
    assert not gram.complete
    with pytest.raises(TruncationError):
        bd.contraction_norm_sq(gram, 30.0, 3, 2, 3, 3, 3, 1)
    with pytest.raises(TruncationError):
        bd.l4_norm_4(gram, 30.0, 3, 2, 3)
    # one- and zero-moment terms have exact identities and stay available
    assert bd.contraction_norm_sq(gram, 30.0, 3, 2, 2, 3, 2, 1) >= 0


def test_stein_malliavin_rhs_structure():
    assert bd.stein_malliavin_rhs({}, {1: 0.04}, 1) == pytest.approx(0.2, rel=1e-15)
    c = {(2, 2, 1, 1): 0.09, (2, 2, 2, 1): 0.01, (1, 2, 1, 1): 0.16}
    l4 = {1: 0.0001, 2: 0.0004}
    rhs = bd.stein_malliavin_rhs(c, l4, 2)
    assert rhs == pytest.approx(0.3 + 0.4 + 0.02, rel=1e-15)
    assert all(rhs >= math.sqrt(v) for v in list(c.values()) + list(l4.values()))
    with pytest.raises(InvalidParameterError, match=r"\(2, 2, 2, 1\)"):
        bd.stein_malliavin_rhs({(2, 2, 1, 1): 0.1, (1, 2, 1, 1): 0.1}, l4, 2)


def test_rate_bounds_examples():
    B, s, d, n = 2.0, 1.0, 1, 2
    js = range(2, 12)
    ratio_i = [bd.rate_bounds(B ** (4 * j), B, s, d, n, j, "i") for j in js]
    r_i = [f / s_ for f, s_ in ratio_i]
    assert max(r_i) / min(r_i) < 2
    # dominant summand equals the simple rate
    for j in js:
        R = B ** (4 * j)
        top = max(bd.rate_terms_log(R, B, s, d, n, j, "i"))
        assert top == pytest.approx(bd.simple_rate_log(R, B, s, d, j, "i"), abs=1e-12)
    r_ii = [f / s_ for f, s_ in (bd.rate_bounds(B**j * j**2, B, s, d, n, j, "ii") for j in js)]
    assert max(r_ii) / min(r_ii) < 10
    simple = [bd.rate_bounds(B**j * j**2, B, s, d, n, j, "ii")[1] for j in js]
    for a, b in zip(simple, simple[1:]):
        assert b / a == pytest.approx(B ** (-d / 2), rel=1e-14)
    with pytest.raises(InvalidParameterError):
        bd.rate_bounds(10.0, B, s, d, n, 2, "iii")


def test_bound_report_nonnegative(frame8, besov8):
    gram = us.compute_gram(frame8, besov8, 3)
    rep = bd.bound_report(gram, 2.0**3 * 9, 2, 3, 2.0, 1.0, 1)
    vals = list(rep.contraction_norms.values()) + list(rep.l4_norms.values())
    assert all(v >= 0 for v in vals)
    assert rep.stein_malliavin_bound >= max(math.sqrt(v) for v in vals)
    assert rep.simple_rate == pytest.approx(2.0 ** -1.5, rel=1e-14)


def test_stein_malliavin_rhs_slope_regime_ii(frame8, uniform8):
    # R_t B^{-jd} grows and the last chaos dominates; the bound should follow B^{-jd/2}
    js = [2, 3, 4, 5, 6]
    rhs = []
    for j in js:
        gram = us.compute_gram(frame8, uniform8, j)
        rhs.append(bd.bound_report(gram, 2.0 ** (2 * j), 2, j, 2.0, 1.0, 1).stein_malliavin_bound)
    assert all(b < a for a, b in zip(rhs, rhs[1:]))
    slope = float(np.polyfit(js, np.log(rhs), 1)[0])
    target = -0.5 * math.log(2.0)
    assert abs(slope - target) <= 0.25 * abs(target)
