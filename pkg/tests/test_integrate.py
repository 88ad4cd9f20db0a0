import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kcm.dynsys import reference_manifold, register_example
from kcm.integrate import (
    Dataset,
    IntegratorConfig,
    NewtonError,
    corners,
    dedupe,
    generate_dataset,
    implicit_euler_step,
    in_cube,
    integrate,
    integrate_full,
    simulate_reduced,
)


def linear(lam):
    return (lambda z: lam * z), (lambda z: np.array([[lam]]))


def test_linear_step_closed_form():
    f, jac = linear(-1.0)
    z = implicit_euler_step(f, jac, np.array([1.0]), 0.1)
    assert z[0] == pytest.approx(1.0 / 1.1, rel=1e-15)


def test_equilibrium_is_fixed():
    sys = register_example(3)
    z = implicit_euler_step(sys.rhs, sys.jacobian, np.zeros(3), 0.1)
    assert np.all(z == 0.0)


@given(st.floats(-5.0, -1e-3), st.floats(0.01, 1.0), st.floats(-1.0, 1.0))
def test_linear_trajectory_matches_closed_form(lam, dt, y0):
    f, jac = linear(lam)
    cfg = IntegratorConfig(T=100 * dt, dt=dt)
    traj = integrate(f, jac, [y0], cfg)
    k = np.arange(traj.times.size)
    np.testing.assert_allclose(traj.states[:, 0], y0 / (1 - dt * lam) ** k, rtol=1e-12, atol=1e-300)


def _rk4(f, y, h, steps):
    for _ in range(steps):
        k1 = f(y)
        k2 = f(y + h / 2 * k1)
        k3 = f(y + h / 2 * k2)
        k4 = f(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def test_example2_step_against_rk4():
    sys = register_example(2)
    s0 = np.array([0.05, 0.0025])
    z = implicit_euler_step(sys.rhs, sys.jacobian, s0, 0.1)
    ref = _rk4(sys.rhs, s0, 1e-4, 1000)
    assert abs(z[1] - z[0] ** 2) <= 5e-4
    np.testing.assert_allclose(z, ref, atol=5e-4)


def test_small_states_still_move():
    # tiny residual at the warm start must not freeze the trajectory
    f, jac = linear(-0.05)
    z = implicit_euler_step(f, jac, np.array([1e-20]), 0.1, tol=1e-12)
    assert z[0] == pytest.approx(1e-20 / 1.005, rel=1e-12)


def test_newton_failure_reports_residual():
    f = lambda z: np.array([np.sqrt(abs(z[0])) * 1e3 + 1.0])  # noqa: E731
    jac = lambda z: np.array([[0.0]])  # noqa: E731
    with pytest.raises(NewtonError) as info:
        implicit_euler_step(f, jac, np.array([1.0]), 0.1, max_iter=3)
    assert info.value.residual > 0


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(t0=1.0, T=1.0)
    with pytest.raises(ValueError):
        IntegratorConfig(newton_tol=0.0)
    cfg = IntegratorConfig(T=1.0, dt=0.1)
    assert cfg.n_steps == 10
    np.testing.assert_allclose(np.diff(cfg.times()), 0.1)


def test_corner_order():
    c = corners(2)
    np.testing.assert_array_equal(c, [[-0.8, -0.8], [-0.8, 0.8], [0.8, -0.8], [0.8, 0.8]])
    assert len(corners(3)) == 8


def test_cube_filter_is_closed():
    pts = np.array([[0.2, 0.05], [0.1, -0.1], [0.0, 0.1000001]])
    np.testing.assert_array_equal(in_cube(pts), [False, True, False])


def test_dedupe_first_occurrence_wins():
    X = np.array([[0.1], [0.2], [0.1], [0.1 + 1e-15], [0.3]])
    np.testing.assert_array_equal(dedupe(X, 0.0), [0, 1, 3, 4])
    np.testing.assert_array_equal(dedupe(X, 1e-14), [0, 1, 4])


@given(st.lists(st.floats(-0.1, 0.1), min_size=1, max_size=40), st.sampled_from([0.0, 1e-3, 1e-2]))
def test_dedupe_leaves_separated_points(vals, tol):
    X = np.array(vals)[:, None]
    keep = dedupe(X, tol)
    kept = X[keep, 0]
    assert len(set(keep.tolist())) == len(keep)
    if tol > 0:
        gaps = np.abs(kept[:, None] - kept[None, :]) + np.eye(len(kept)) * 1.0
        assert gaps.min() > tol
    else:
        assert len(np.unique(kept)) == len(kept)
    # every dropped point is covered by a kept one
    for v in X[:, 0]:
        assert np.min(np.abs(kept - v)) <= tol


def test_reduced_zero_initial_value_stays_zero():
    ref = reference_manifold(1)
    sys = register_example(1)
    traj = simulate_reduced(sys.L1, sys.N1, ref, [0.0], IntegratorConfig(T=5.0))
    assert np.all(traj.states == 0.0)


def test_reduced_example1_decreases_monotonically():
    sys = register_example(1)
    traj = simulate_reduced(sys.L1, sys.N1, reference_manifold(1), [0.05], IntegratorConfig(T=200.0))
    assert np.all(np.diff(np.abs(traj.states[:, 0])) < 0)


def _small_example_data(example, T=150.0):
    return generate_dataset(register_example(example), IntegratorConfig(T=T), return_trajectories=True)


@pytest.mark.parametrize("example", [1, 2, 3])
def test_dataset_invariants(example):
    data, trajs = _small_example_data(example)
    assert isinstance(data, Dataset)
    assert data.X.shape[0] == data.Y.shape[0] == data.N > 0
    assert np.max(np.abs(np.hstack([data.X, data.Y]))) <= 0.1
    assert len(trajs) == 2 ** register_example(example).n
    for tr in trajs:
        inside = in_cube(tr.states)
        if inside.any():
            first = np.linalg.norm(tr.states[np.argmax(inside)])
            assert np.linalg.norm(tr.states[-1]) <= 1.01 * first


def test_dataset_is_deterministic():
    a = generate_dataset(register_example(1), IntegratorConfig(T=50.0))
    b = generate_dataset(register_example(1), IntegratorConfig(T=50.0))
    assert a.X.tobytes() == b.X.tobytes() and a.Y.tobytes() == b.Y.tobytes()


def test_dataset_failure_names_corner(monkeypatch):
    import kcm.integrate as mod

    def boom(*args, **kwargs):
        raise NewtonError("no convergence", 1.0)

    monkeypatch.setattr(mod, "integrate_full", boom)
    with pytest.raises(RuntimeError, match=r"corner \[-0.8, -0.8\]"):
        mod.generate_dataset(register_example(1), IntegratorConfig(T=1.0))


def test_full_trajectory_shapes():
    tr = integrate_full(register_example(3), [-0.8, -0.8, -0.8], IntegratorConfig(T=1.0))
    assert tr.states.shape == (11, 3)
    assert tr.times[0] == 0.0 and tr.times[-1] == pytest.approx(1.0)
