import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kcm import kernels
from kcm.experiments import default_config
from kcm.greedy import GramBreakdown, fill_distance, p_greedy, power_function
from kcm.kernels import KernelSpec

SPECS = [KernelSpec.gaussian(1.0), KernelSpec.gaussian(5.0), KernelSpec.polynomial(4), KernelSpec.wendland()]


def dense_power(Xn, k, q):
    G = kernels.gram(k, Xn)
    kq = kernels.gram(k, Xn, q[None, :])[:, 0]
    return np.sqrt(max(kernels.eval(k, q, q) - kq @ np.linalg.solve(G, kq), 0.0))


def test_single_candidate():
    k = KernelSpec.gaussian(1.0)
    res = p_greedy(np.array([[0.05]]), k, 1e-12)
    assert res.indices == [0]
    assert res.power_history == [1.0, 0.0]
    assert res.stop_reason == "exhausted"


def test_power_function_examples(rng):
    k = KernelSpec.gaussian(1.0)
    Xn = rng.uniform(-1, 1, (5, 1))
    assert power_function(Xn, k, Xn[2]) <= 1e-10
    assert power_function(np.zeros((0, 1)), k, [0.3]) == pytest.approx(1.0)
    assert power_function([], KernelSpec.polynomial(4), [1.0]) == pytest.approx(np.sqrt(1.5**4))
    for q in rng.uniform(-1, 1, (10, 1)):
        assert power_function(Xn, k, q) == pytest.approx(dense_power(Xn, k, q), abs=1e-10)


def test_power_function_breakdown_detected():
    k = KernelSpec.gaussian(1.0)
    # duplicate centers make the Gram matrix singular
    with pytest.raises((GramBreakdown, np.linalg.LinAlgError)):
        power_function(np.array([[0.1], [0.1]]), k, [0.5])


def test_fill_distance_examples():
    X = np.linspace(-0.1, 0.1, 11)[:, None]
    assert fill_distance(X, X) == 0.0
    grid = np.linspace(-0.1, 0.1, 2001)[:, None]
    assert fill_distance(np.array([[-0.1], [0.1]]), grid) == pytest.approx(0.1, abs=1e-12)
    with pytest.raises(ValueError):
        fill_distance(np.zeros((0, 1)), grid)


def test_argument_checks():
    X = np.zeros((3, 1))
    with pytest.raises(ValueError):
        p_greedy(X, SPECS[0], 0.0)
    with pytest.raises(ValueError):
        p_greedy(X, SPECS[0], 1e-3, compare="cubed")


def test_tie_goes_to_lowest_index():
    # gaussian diagonal is constant, so the first pick is candidate 0
    X = np.array([[0.05], [-0.05], [0.0]])
    assert p_greedy(X, KernelSpec.gaussian(1.0), 1e-14).indices[0] == 0


def test_compare_modes_thresholds():
    X = np.linspace(-0.1, 0.1, 400)[:, None]
    k = KernelSpec.gaussian(5.0)
    sq = p_greedy(X, k, 1e-8, compare="squared")
    pw = p_greedy(X, k, 1e-4, compare="power")
    assert sq.indices == pw.indices
    assert sq.power_history[-1] ** 2 <= 1e-8


@pytest.mark.parametrize("oc", [False, True])
@given(st.sampled_from(SPECS), st.integers(1, 2), st.integers(0, 2**32 - 1))
def test_incremental_power_matches_dense(oc, k, d, seed):
    X = np.random.default_rng(seed).uniform(-0.1, 0.1, (120, d))
    res = p_greedy(X, k, 1e-12, max_points=12, origin_constraints=oc)
    for n in range(1, res.n_selected):
        q = X[res.indices[n]]
        dense = power_function(X[res.indices[:n]], k, q, origin_constraints=oc)
        assert res.power_history[n] == pytest.approx(dense, abs=1e-9)


@given(st.sampled_from(SPECS), st.integers(1, 2), st.integers(0, 2**32 - 1), st.booleans())
def test_history_monotone_and_selection_distinct(k, d, seed, oc):
    X = np.random.default_rng(seed).uniform(-0.1, 0.1, (200, d))
    res = p_greedy(X, k, 1e-14, max_points=25, origin_constraints=oc, keep_basis=True)
    h = np.array(res.power_history)
    assert np.all(np.diff(h) <= 0.0)
    assert len(set(res.indices)) == res.n_selected
    if not oc:
        # the Newton basis reproduces the kernel diagonal on the selected points
        V = res.newton_basis[res.indices]
        p2 = kernels.diag(k, X[res.indices]) - np.sum(V**2, axis=1)
        assert np.all(p2 <= 1e-10)


def test_dense_oracle_size_50(rng):
    X = rng.uniform(-1, 1, (300, 2))
    k = KernelSpec.gaussian(1.0)
    res = p_greedy(X, k, 1e-30, max_points=50, compute_fill=False)
    assert res.n_selected == 50
    for n in (5, 20, 35, 49):
        q = X[res.indices[n]]
        assert res.power_history[n] == pytest.approx(power_function(X[res.indices[:n]], k, q), abs=1e-9)


def test_stop_reasons():
    X = np.linspace(-0.1, 0.1, 50)[:, None]
    k = KernelSpec.gaussian(1.0)
    assert p_greedy(X, k, 1e-2).stop_reason == "tolerance"
    assert p_greedy(X, k, 1e-30, max_points=3).stop_reason == "max_points"
    assert p_greedy(X[:3], k, 1e-30).stop_reason == "exhausted"


def test_fill_distance_decays_on_prefixes(rng):
    X = np.sort(rng.uniform(-0.1, 0.1, 3000))[:, None]
    res = p_greedy(X, KernelSpec.wendland(), 1e-30, max_points=200, compute_fill=False)
    theta = [fill_distance(X[res.indices[:n]], X) for n in range(1, res.n_selected + 1)]
    for n in range(1, 101):
        assert theta[2 * n - 1] <= theta[n - 1]


def test_fill_distance_decays_on_example2_prefixes(datasets):
    data = datasets(2)
    cfg = default_config(2)
    res = p_greedy(data.X, cfg.runs[0].kernel, cfg.eps_tol, max_points=200, compute_fill=False)
    assert res.n_selected == 200
    theta = [fill_distance(data.X[res.indices[:n]], data.X) for n in range(1, 201)]
    for n in range(1, 101):
        assert theta[2 * n - 1] <= theta[n - 1]
