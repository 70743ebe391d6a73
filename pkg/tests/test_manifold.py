import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from needlet_ustat import frame as fr
from needlet_ustat import manifold as mf
from needlet_ustat.errors import InvalidParameterError, NonConvergenceError


@pytest.mark.parametrize("B, j, expected", [
    (2.0, 2, list(range(2, 9))),
    (2.0, 0, [1, 2]),
    (3.0, 1, list(range(1, 10))),
])
def test_eigen_window_indices(circle, B, j, expected):
    assert mf.eigen_window_indices(circle, B, j) == expected


def test_eigen_window_rejects_small_B(circle):
    with pytest.raises(InvalidParameterError):
        mf.eigen_window_indices(circle, 1.0, 2)


def test_rule_weights_sum_to_circumference(circle):
    _, w = circle.quadrature_rule(4)
    assert abs(w.sum() - 2 * math.pi) < 1e-12


def test_reproducing_property_example(circle):
    nodes, w = circle.quadrature_rule(6)
    val = float(np.sum(w * circle.projector_kernel(3, nodes, 0.0) * circle.projector_kernel(3, 0.0, nodes)))
    # direct trapezoid summation on a fine grid as the reference
    t = 2 * math.pi * np.arange(4096) / 4096
    ref = float(np.sum(np.cos(3 * t) ** 2) / math.pi**2 * 2 * math.pi / 4096)
    assert abs(val - 1 / math.pi) < 1e-10
    assert abs(ref - 1 / math.pi) < 1e-10


@given(st.integers(0, 12), st.integers(0, 12))
def test_orthonormality_under_rule(q1, q2):
    circle = mf.make_circle()
    nodes, w = circle.quadrature_rule(12)
    U1 = circle.eigenfunctions(q1, nodes)
    U2 = circle.eigenfunctions(q2, nodes)
    gram = (U1 * w) @ U2.T
    target = np.eye(U1.shape[0]) if q1 == q2 else np.zeros((U1.shape[0], U2.shape[0]))
    assert np.max(np.abs(gram - target)) < 1e-10


@given(st.integers(0, 16), st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
def test_reproducing_kernel(q, x, y):
    circle = mf.make_circle()
    z, w = circle.quadrature_rule(16)
    lhs = float(np.sum(w * circle.projector_kernel(q, x, z) * circle.projector_kernel(q, z, y)))
    assert abs(lhs - float(circle.projector_kernel(q, x, y))) < 1e-9


def test_geodesic_is_a_metric(circle):
    rng = np.random.default_rng(5)
    x, y, z = (2 * math.pi * rng.random(1000) for _ in range(3))
    dxy, dyx = circle.geodesic(x, y), circle.geodesic(y, x)
    assert np.array_equal(dxy, dyx)
    # up to the rounding of the reduction modulo 2 pi
    assert np.all(circle.geodesic(x, z) <= dxy + circle.geodesic(y, z) + 8 * np.finfo(float).eps * math.pi)
    assert np.all((dxy >= 0) & (dxy <= math.pi))
    assert np.all(circle.geodesic(x, x) == 0)


def test_integrate_closed_forms(circle):
    assert abs(mf.integrate(circle, lambda x: np.ones_like(x), bandwidth=0) - 2 * math.pi) < 1e-12
    assert abs(mf.integrate(circle, lambda x: np.cos(5 * x) ** 2, bandwidth=5) - math.pi) < 1e-12
    # refinement path without a bandwidth
    assert abs(mf.integrate(circle, lambda x: np.cos(5 * x) ** 2) - math.pi) < 1e-9


def test_integrate_needlet_square_against_denser_grid(circle):
    frame = fr.build_frame(circle, 2.0, 5)
    psi = lambda x: frame.evaluate(4, x, [3])[0]
    val = mf.integrate(circle, lambda x: psi(x) ** 2, bandwidth=frame.band(4))
    nodes, w = circle.uniform_rule(10 * (2 * frame.band(4) + 1))
    ref = float(np.sum(w * psi(nodes) ** 2))
    assert abs(val - ref) / ref < 1e-8


def test_integrate_reports_nonconvergence(circle):
    cusp = lambda x: np.sqrt(np.abs(np.sin(x - 0.3)))
    with pytest.raises(NonConvergenceError):
        mf.integrate(circle, cusp, max_level=10)
