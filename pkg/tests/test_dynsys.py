import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kcm.dynsys import SplitSystem, full_rhs, reference_manifold, register_example


def test_example1_nonlinearity():
    sys = register_example(1)
    assert sys.N2(np.array([0.1]), np.array([0.0]))[0] == pytest.approx(-0.01, abs=1e-16)
    np.testing.assert_allclose(full_rhs(sys, [0.1], [-0.01]), [-0.001, 0.0], atol=1e-17)


def test_example2_rhs():
    sys = register_example(2)
    np.testing.assert_array_equal(full_rhs(sys, [0.0], [0.0]), [0.0, 0.0])
    np.testing.assert_array_equal(full_rhs(sys, [0.0], [1.0]), [0.0, -3.0])


def test_example3_spectrum():
    sys = register_example(3)
    ev = np.sort_complex(np.linalg.eigvals(sys.L1))
    np.testing.assert_allclose(ev, [-1j, 1j], atol=1e-15)
    assert (sys.d, sys.m, sys.n) == (2, 1, 3)


@pytest.mark.parametrize("i", [1, 2, 3])
def test_origin_is_equilibrium(i):
    sys = register_example(i)
    assert np.all(full_rhs(sys, np.zeros(sys.d), np.zeros(sys.m)) == 0.0)


@pytest.mark.parametrize("bad", [0, 4, "x", None])
def test_unknown_example_rejected(bad):
    with pytest.raises(ValueError):
        register_example(bad)
    with pytest.raises(ValueError):
        reference_manifold(bad)


def test_reference_values():
    assert reference_manifold(2).expr([0.1])[0] == pytest.approx(0.01, abs=1e-17)
    assert reference_manifold(1).expr([0.0])[0] == 0.0
    assert reference_manifold(3).expr([0.1, 0.0])[0] == pytest.approx(-0.0103, abs=1e-16)


@pytest.mark.parametrize("i", [1, 2, 3])
def test_reference_tangent_at_origin(i):
    ref = reference_manifold(i)
    z = np.zeros(ref.d)
    assert ref.expr(z)[0] == 0.0
    h = 1e-6
    grad = [(ref.expr(z + h * e)[0] - ref.expr(z - h * e)[0]) / (2 * h) for e in np.eye(ref.d)]
    assert np.linalg.norm(grad) <= 1e-9


@pytest.mark.parametrize("i", [1, 2, 3])
def test_reference_jacobian_matches_fd(i, rng):
    ref = reference_manifold(i)
    for x in rng.uniform(-0.1, 0.1, (20, ref.d)):
        fd = [(ref.expr(x + 1e-6 * e)[0] - ref.expr(x - 1e-6 * e)[0]) / 2e-6 for e in np.eye(ref.d)]
        np.testing.assert_allclose(ref.jacobian(x)[0], fd, rtol=1e-6, atol=1e-12)
    X = rng.uniform(-0.1, 0.1, (7, ref.d))
    np.testing.assert_allclose(ref.evaluate_many(X), [ref(x)[0] for x in X], rtol=1e-14)
    np.testing.assert_allclose(ref.jacobian_many(X), np.vstack([ref.jacobian(x) for x in X]), rtol=1e-14)


@given(st.floats(-0.1, 0.1))
def test_example2_exact_manifold_is_invariant(x):
    sys, ref = register_example(2), reference_manifold(2)
    xv = np.array([x])
    h = ref.expr(xv)
    defect = sys.N2(xv, h) + sys.L2 @ h - ref.jacobian(xv) @ (sys.L1 @ xv + sys.N1(xv, h))
    assert abs(defect[0]) <= 1e-14


@pytest.mark.parametrize("i", [1, 2, 3])
def test_analytic_jacobian_matches_fd_fallback(i, rng):
    sys = register_example(i)
    plain = SplitSystem(sys.d, sys.m, sys.L1, sys.L2, sys.N1, sys.N2)
    for s in rng.uniform(-0.5, 0.5, (10, sys.n)):
        np.testing.assert_allclose(sys.jacobian(s), plain.jacobian(s), atol=1e-7)


def test_registration_checks():
    ok = dict(d=1, m=1, L1=[[0.0]], L2=[[-1.0]], N1=lambda x, y: x * y, N2=lambda x, y: x**2)
    SplitSystem(**ok)
    with pytest.raises(ValueError):
        SplitSystem(**{**ok, "L1": [[0.5]]})
    with pytest.raises(ValueError):
        SplitSystem(**{**ok, "L2": [[0.0]]})
    with pytest.raises(ValueError):
        SplitSystem(**{**ok, "N1": lambda x, y: x + 1.0})
    with pytest.raises(ValueError):
        SplitSystem(**{**ok, "L1": [[0.0, 1.0]]})


def test_full_rhs_rejects_nonfinite():
    sys = register_example(1)
    with pytest.raises(FloatingPointError):
        full_rhs(sys, [np.nan], [0.0])
    with pytest.raises(FloatingPointError):
        full_rhs(sys, [1e200], [1e200])
