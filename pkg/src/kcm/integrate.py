"""Implicit Euler integration and generation of the near-origin training set."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dynsys import SplitSystem

CUBE_HALF_WIDTH = 0.1
CORNER = 0.8


class NewtonError(RuntimeError):
    """Raised when the implicit step's Newton iteration does not converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class IntegratorConfig:
    t0: float = 0.0
    T: float = 1000.0
    dt: float = 0.1
    newton_tol: float = 1e-12
    newton_max_iter: int = 50

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.T > self.t0:
            raise ValueError("T must exceed t0")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")

    @property
    def n_steps(self) -> int:
        return int(round((self.T - self.t0) / self.dt))

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")


@dataclass
class Dataset:
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        if self.X.shape[0] != self.Y.shape[0]:
            raise ValueError("X and Y differ in length")

    @property
    def N(self) -> int:
        return self.X.shape[0]


def implicit_euler_step(
    f: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray],
    state,
    dt: float,
    tol: float = 1e-12,
    max_iter: int = 50,
) -> np.ndarray:
    """Solve ``z = state + dt * f(z)`` by Newton's method, warm-started at ``state``.

    At least one Newton update is always applied, so a nonzero state is never
    frozen just because ``dt * f(state)`` is already below ``tol``. If the
    plain iteration fails, one retry with step-halving damping (10 iterations)
    is made before :class:`NewtonError` is raised.
    """
    state = np.asarray(state, dtype=float)
    eye = np.eye(state.size)

    def residual(z):
        return z - state - dt * f(z)

    z = state.copy()
    res = residual(z)
    # the norm can underflow to 0 for tiny states; test the entries
    if not np.any(res):
        return z
    for it in range(max_iter):
        z = z - np.linalg.solve(eye - dt * jac(z), res)
        res = residual(z)
        norm = np.linalg.norm(res)
        if norm <= tol:
            return z
        if not np.isfinite(norm):
            break

    # damped retry from the warm start
    z = state.copy()
    res = residual(z)
    norm = np.linalg.norm(res)
    for it in range(10):
        delta = np.linalg.solve(eye - dt * jac(z), res)
        step = 1.0
        while step > 1e-4:
            trial = z - step * delta
            trial_res = residual(trial)
            trial_norm = np.linalg.norm(trial_res)
            if np.isfinite(trial_norm) and trial_norm < norm:
                break
            step *= 0.5
        z, res, norm = trial, trial_res, trial_norm
        if norm <= tol:
            return z
    raise NewtonError(f"implicit Euler Newton iteration did not converge (residual {norm:.3e})", norm)


def integrate(f, jac, x0, config: IntegratorConfig) -> Trajectory:
    """Implicit Euler trajectory of ``x' = f(x)`` on ``config``'s time grid."""
    times = config.times()
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial state is not finite")
    states = np.empty((times.size, x0.size))
    states[0] = x0
    for i in range(1, times.size):
        states[i] = implicit_euler_step(
            f, jac, states[i - 1], config.dt, config.newton_tol, config.newton_max_iter
        )
    return Trajectory(times, states)


def integrate_full(sys: SplitSystem, state0, config: IntegratorConfig) -> Trajectory:
    return integrate(sys.rhs, sys.jacobian, state0, config)


def corners(n: int) -> list[np.ndarray]:
    """The ``2**n`` initial values ``{-0.8, 0.8}**n``, minus before plus, lexicographic."""
    return [CORNER * np.array(signs) for signs in itertools.product((-1.0, 1.0), repeat=n)]


def in_cube(states: np.ndarray, half_width: float = CUBE_HALF_WIDTH) -> np.ndarray:
    """Boolean mask of rows inside the closed cube ``[-h, h]**n``."""
    return np.all(np.abs(np.atleast_2d(states)) <= half_width, axis=1)


def dedupe(X: np.ndarray, tol: float) -> np.ndarray:
    """Indices of rows of ``X`` kept after removing near-duplicates.

    A row is dropped when its max-norm distance to an earlier kept row is at
    most ``tol``; the first occurrence wins.
    """
    X = np.atleast_2d(X)
    if X.shape[0] == 0:
        return np.arange(0)
    if tol <= 0.0:
        _, first = np.unique(X, axis=0, return_index=True)
        return np.sort(first)
    # sort along the first coordinate so candidates are contiguous
    order = np.argsort(X[:, 0], kind="stable")
    dropped = np.zeros(X.shape[0], dtype=bool)
    Xs = X[order]
    for a in range(Xs.shape[0]):
        ia = order[a]
        if dropped[ia]:
            continue
        b = a + 1
        while b < Xs.shape[0] and Xs[b, 0] - Xs[a, 0] <= tol:
            ib = order[b]
            if not dropped[ib] and np.max(np.abs(Xs[b] - Xs[a])) <= tol:
                # keep whichever came first in generation order
                if ib > ia:
                    dropped[ib] = True
                else:
                    dropped[ia] = True
                    break
            b += 1
    return np.flatnonzero(~dropped)


def generate_dataset(
    sys: SplitSystem,
    config: IntegratorConfig | None = None,
    dedupe_tol: float = 0.0,
    return_trajectories: bool = False,
):
    """Run the ``2**n`` corner IVPs and keep states inside ``[-0.1, 0.1]**n``.

    Parameters
    ----------
    sys : SplitSystem
    config : IntegratorConfig, optional
        Defaults to ``t0=0, T=1000, dt=0.1``.
    dedupe_tol : float
        Max-norm tolerance in ``x`` for duplicate removal. ``0`` removes exact
        duplicates only.
    return_trajectories : bool
        Also return the list of full trajectories in corner order.
    """
    config = config or IntegratorConfig()
    n = sys.n
    if n > 20:
        raise ValueError("2**n IVPs are only run for n <= 20")
    kept = []
    trajectories = []
    for corner in corners(n):
        try:
            traj = integrate_full(sys, corner, config)
        except (NewtonError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise RuntimeError(f"integration from corner {corner.tolist()} failed: {exc}") from exc
        trajectories.append(traj)
        kept.append(traj.states[in_cube(traj.states)])
    states = np.vstack(kept) if kept else np.zeros((0, n))
    X, Y = states[:, : sys.d], states[:, sys.d :]
    idx = dedupe(X, dedupe_tol)
    data = Dataset(X[idx], Y[idx])
    if return_trajectories:
        return data, trajectories
    return data


def simulate_reduced(L1, N1, hhat, x0, config: IntegratorConfig | None = None, fd_step: float = 1e-7) -> Trajectory:
    """Implicit Euler trajectory of ``x' = L1 x + N1(x, hhat(x))``.

    ``hhat`` is any callable returning the stable coordinates, e.g. an
    :class:`~kcm.manifold.Approximant` or a
    :class:`~kcm.dynsys.ReferenceManifold`. The Newton Jacobian of the
    nonlinear part is taken by central differences.
    """
    config = config or IntegratorConfig()
    L1 = np.atleast_2d(np.asarray(L1, dtype=float))

    def g(x):
        return N1(x, np.atleast_1d(hhat(x)))

    def f(x):
        return L1 @ x + g(x)

    def jac(x):
        J = np.empty((x.size, x.size))
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = fd_step
            J[:, i] = (g(x + e) - g(x - e)) / (2 * fd_step)
        return L1 + J

    return integrate(f, jac, x0, config)
