"""Diagnostics for a fitted center manifold."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynsys import SplitSystem
from .integrate import IntegratorConfig, integrate_full, simulate_reduced
from .manifold import FitConfig, FitError, fit

log = logging.getLogger(__name__)


def test_grid(d: int, resolution: Optional[int] = None, half_width: float = 0.1) -> np.ndarray:
    """Equispaced grid on ``[-h, h]**d``: 1001 points for ``d = 1``, ``101**2`` for ``d = 2``.

    Points are returned in row-major order (last coordinate fastest).
    """
    if resolution is None:
        resolution = 1001 if d == 1 else 101
    axis = np.linspace(-half_width, half_width, resolution)
    # linspace puts the midpoint at a tiny nonzero value for some sizes
    if resolution % 2 == 1:
        axis[resolution // 2] = 0.0
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


test_grid.__test__ = False  # not a pytest test


def _values(hhat, X) -> np.ndarray:
    if hasattr(hhat, "evaluate_many"):
        return np.asarray(hhat.evaluate_many(X), dtype=float)
    return np.array([np.atleast_1d(hhat(x))[0] for x in X])


def residual(sys: SplitSystem, hhat, x) -> np.ndarray:
    """Defect of the invariance equation at ``x``.

    ``r(x) = Dh(x) (L1 x + N1(x, h(x))) - (L2 h(x) + N2(x, h(x)))``
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = np.atleast_1d(hhat(x))
    Dh = np.atleast_2d(hhat.jacobian(x))
    flow = sys.L1 @ x + sys.N1(x, h)
    return Dh @ flow - (sys.L2 @ h + sys.N2(x, h))


def residual_on_grid(sys: SplitSystem, hhat, X) -> np.ndarray:
    X = np.atleast_2d(X)
    if hasattr(hhat, "evaluate_many"):
        H = hhat.evaluate_many(X)
        DH = hhat.jacobian_many(X)
        out = np.empty(X.shape[0])
        for i, x in enumerate(X):
            h = H[i : i + 1]
            flow = sys.L1 @ x + sys.N1(x, h)
            out[i] = DH[i] @ flow - (sys.L2 @ h + sys.N2(x, h))[0]
        return out
    return np.array([residual(sys, hhat, x)[0] for x in X])


@dataclass
class StabilityScan:
    h_at_0: float
    max_off_origin: float
    verdict: str


def stability_scan(hhat, grid) -> StabilityScan:
    """Sign check of ``hhat`` for reduced dynamics of the form ``x' = x h(x)``.

    The verdict is ``stable-consistent`` when ``h`` is negative on the grid
    away from the origin and ``h(0) <= 0``, ``inconclusive`` otherwise.
    """
    grid = np.atleast_2d(grid)
    at_origin = np.all(grid == 0.0, axis=1)
    vals = _values(hhat, grid[~at_origin])
    h0 = float(np.atleast_1d(hhat(np.zeros(grid.shape[1])))[0])
    max_off = float(vals.max())
    verdict = "stable-consistent" if (max_off < 0.0 and h0 <= 0.0) else "inconclusive"
    return StabilityScan(h0, max_off, verdict)


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x`` over finite positive entries."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


@dataclass
class ConvergenceCurve:
    N: np.ndarray
    e_N: np.ndarray
    slope: float
    window: tuple[int, int]
    failures: list[int] = field(default_factory=list)


def convergence_study(
    X,
    Y,
    config: FitConfig,
    order,
    grid,
    h_exact: Callable,
    window: tuple[int, int] = (20, 200),
) -> ConvergenceCurve:
    """Fit on every greedy prefix and record the max grid error.

    Parameters
    ----------
    X, Y : arrays
        The candidate data the greedy order indexes into.
    order : sequence of int
        Greedy selection order.
    grid : array (n, d)
    h_exact : callable
        Vectorised exact manifold, mapping ``(n, d)`` to ``(n,)``.
    window : (int, int)
        Range of prefix sizes for the log-log slope fit.
    """
    X = np.atleast_2d(X)
    Y = np.asarray(Y).reshape(X.shape[0], -1)[:, 0]
    grid = np.atleast_2d(grid)
    exact = np.asarray(h_exact(grid), dtype=float)
    order = list(order)
    sizes = np.arange(1, len(order) + 1)
    errors = np.full(sizes.size, np.nan)
    failures = []
    for j, n in enumerate(sizes):
        idx = order[:n]
        try:
            hhat = fit(X[idx], Y[idx], config, check=False)
        except (FitError, np.linalg.LinAlgError, ValueError) as exc:
            log.info("prefix %d fit failed: %s", n, exc)
            failures.append(int(n))
            continue
        errors[j] = np.max(np.abs(exact - hhat.evaluate_many(grid)))
    lo, hi = window
    sel = (sizes >= lo) & (sizes <= hi)
    return ConvergenceCurve(sizes, errors, loglog_slope(sizes[sel], errors[sel]), window, failures)


@dataclass
class OrderProbe:
    q: Optional[float]
    c: Optional[float]
    status: str
    x: np.ndarray = field(repr=False, default=None)
    error: np.ndarray = field(repr=False, default=None)


def local_order_probe(
    hhat,
    h_exact: Callable,
    inner: tuple[float, float] = (-0.01, 0.01),
    n_points: int = 1001,
    exclude_below: float = 1e-4,
    floor: float = 1e-15,
) -> OrderProbe:
    """Fit ``|h - hhat|(x) ~ c |x|**q`` near the origin (``d = 1``).

    The test grid is rescaled onto ``inner``; points with ``|x| < exclude_below``
    and errors at or below ``floor`` are left out of the regression. If every
    error is at or below ``floor`` the probe is inconclusive.
    """
    x = np.linspace(inner[0], inner[1], n_points)
    X = x[:, None]
    err = np.abs(np.asarray(h_exact(X), dtype=float) - _values(hhat, X))
    if np.all(err <= floor):
        return OrderProbe(None, None, "inconclusive", x, err)
    use = (np.abs(x) >= exclude_below) & (err > floor)
    if use.sum() < 2:
        return OrderProbe(None, None, "inconclusive", x, err)
    q, logc = np.polyfit(np.log(np.abs(x[use])), np.log(err[use]), 1)
    return OrderProbe(float(q), float(np.exp(logc)), "ok", x, err)


@dataclass
class TrajectoryComparison:
    times: np.ndarray
    full: np.ndarray
    reduced: np.ndarray
    abs_err: np.ndarray
    rel_err: np.ndarray
    decay_rate: float
    plateau: float
    rate_window: tuple[float, float]
    plateau_window: tuple[float, float]


def trajectory_compare(
    sys: SplitSystem,
    hhat,
    x0_full,
    config: IntegratorConfig | None = None,
    rate_window: tuple[float, float] = (50.0, 350.0),
    plateau_window: tuple[float, float] = (100.0, 350.0),
) -> TrajectoryComparison:
    """Full system vs. reduced dynamics on ``hhat`` from a shared initial value.

    ``decay_rate`` is the slope of ``log abs_err`` over ``rate_window`` (so
    ``abs_err ~ exp(decay_rate * t)``); ``plateau`` is the mean relative error
    over ``plateau_window``. Relative errors are ``nan`` once the full
    trajectory's center part drops to ``1e-12`` or below.
    """
    config = config or IntegratorConfig()
    x0_full = np.asarray(x0_full, dtype=float)
    full = integrate_full(sys, x0_full, config)
    reduced = simulate_reduced(sys.L1, sys.N1, hhat, x0_full[: sys.d], config)
    xc = full.states[:, : sys.d]
    abs_err = np.linalg.norm(xc - reduced.states, axis=1)
    nrm = np.linalg.norm(xc, axis=1)
    rel_err = np.full_like(abs_err, np.nan)
    alive = nrm > 1e-12
    # truncate after the first time the norm falls below the threshold
    if not alive.all():
        alive[np.argmin(alive) :] = False
    rel_err[alive] = abs_err[alive] / nrm[alive]
    t = full.times
    w = (t >= rate_window[0]) & (t <= rate_window[1]) & (abs_err > 0)
    rate = float(np.polyfit(t[w], np.log(abs_err[w]), 1)[0]) if w.sum() >= 2 else float("nan")
    p = (t >= plateau_window[0]) & (t <= plateau_window[1]) & np.isfinite(rel_err)
    plateau = float(np.mean(rel_err[p])) if p.any() else float("nan")
    return TrajectoryComparison(t, xc, reduced.states, abs_err, rel_err, rate, plateau, rate_window, plateau_window)


@dataclass
class PerturbationBoundReport:
    ell1: float
    ell2: float
    eps: float
    q: float
    diam: float
    times: np.ndarray
    measured: np.ndarray
    bound: np.ndarray
    margin: float
    first_violation: Optional[float]
    note: str = "ell1, ell2 and eps are sampled lower bounds of the true suprema"

    @property
    def holds(self) -> bool:
        return self.first_violation is None


def lipschitz_estimates(sys: SplitSystem, h_ref, box, n_per_axis: int = 50) -> tuple[float, float]:
    """Sampled ``sup |D_x(L1 x + N1(x, h(x)))|`` and ``sup |D_y N1(x, y)|_{y=h(x)}|``."""
    lo, hi = np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float)
    axes = [np.linspace(lo[i], hi[i], n_per_axis) for i in range(sys.d)]
    pts = np.column_stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")])
    ell1 = ell2 = 0.0
    for x in pts:
        h = np.atleast_1d(h_ref(x))
        J1, _ = sys.jacobian_N(x, h)
        Jx, Jy = J1[:, : sys.d], J1[:, sys.d :]
        Dh = np.atleast_2d(h_ref.jacobian(x))
        ell1 = max(ell1, float(np.linalg.norm(sys.L1 + Jx + Jy @ Dh, 2)))
        ell2 = max(ell2, float(np.linalg.norm(Jy, 2)))
    return ell1, ell2


def perturbation_bound_check(
    sys: SplitSystem,
    hhat,
    h_ref,
    box,
    x0,
    t_max: float,
    config: IntegratorConfig | None = None,
    n_per_axis: int = 50,
) -> PerturbationBoundReport:
    """Compare the reduced-trajectory deviation with the a-priori bound.

    The bound is ``eps * ell2 / ell1 * diam(B)**q * (exp(ell1 t) - 1)``, with
    ``q`` from :func:`local_order_probe` against ``h_ref`` and ``eps`` the
    sampled ``max |h_ref - hhat| / |x|**q`` over the box. Both reduced systems
    are integrated with the same implicit Euler settings up to ``t_max``.
    """
    base = config or IntegratorConfig()
    config = IntegratorConfig(base.t0, base.t0 + t_max, base.dt, base.newton_tol, base.newton_max_iter)
    lo, hi = np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float)
    ell1, ell2 = lipschitz_estimates(sys, h_ref, (lo, hi), n_per_axis)
    diam = float(np.linalg.norm(hi - lo))

    axes = [np.linspace(lo[i], hi[i], 1001 if sys.d == 1 else 101) for i in range(sys.d)]
    pts = np.column_stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")])
    ref_vals = h_ref.evaluate_many(pts) if hasattr(h_ref, "evaluate_many") else _values(h_ref, pts)
    err = np.abs(ref_vals - _values(hhat, pts))
    if sys.d == 1:
        probe = local_order_probe(hhat, h_ref.evaluate_many)
        q = probe.q if probe.q is not None else 0.0
    else:
        q = 2.0
    nrm = np.linalg.norm(pts, axis=1)
    nz = nrm > 0
    eps = float(np.max(err[nz] / nrm[nz] ** q)) if nz.any() else 0.0
    if np.any(~nz) and err[~nz].max() > 0:
        # a nonzero error at the origin cannot be bounded by eps |x|^q for q > 0
        q = 0.0
        eps = float(err.max())

    x_traj = simulate_reduced(sys.L1, sys.N1, h_ref, x0, config)
    z_traj = simulate_reduced(sys.L1, sys.N1, hhat, x0, config)
    t = x_traj.times - config.t0
    measured = np.linalg.norm(x_traj.states - z_traj.states, axis=1)
    if ell1 > 0:
        bound = eps * ell2 / ell1 * diam**q * np.expm1(ell1 * t)
    else:
        bound = eps * ell2 * diam**q * t
    gap = bound - measured
    bad = np.flatnonzero(gap[1:] < 0)
    first = float(t[1:][bad[0]]) if bad.size else None
    return PerturbationBoundReport(
        ell1, ell2, eps, float(q), diam, t, measured, bound, float(gap[1:].min()), first
    )
