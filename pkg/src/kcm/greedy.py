"""P-greedy center selection with an incrementally updated Newton basis."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .kernels import KernelSpec

NEG_POWER_TOL = 1e-12


class GramBreakdown(ArithmeticError):
    """Squared power at the selected point is clearly negative."""


@dataclass
class GreedyResult:
    """Outcome of a P-greedy run.

    ``power_history[0]`` is the maximal power value before any selection and
    ``power_history[n]`` the maximum over the remaining candidates after
    ``n`` selections. Values are the (unsquared) power function ``P``.
    """

    indices: list[int]
    power_history: list[float]
    eps_tol: float
    fill_distance: float = float("nan")
    stop_reason: str = ""
    origin_constraints: bool = False
    newton_basis: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_selected(self) -> int:
        return len(self.indices)


def p_greedy(
    X,
    k: KernelSpec,
    eps_tol: float,
    max_points: int = 200,
    compare: str = "squared",
    keep_basis: bool = False,
    compute_fill: bool = True,
    origin_constraints: bool = False,
) -> GreedyResult:
    """Select centers from ``X`` by repeatedly maximising the power function.

    The squared power ``P_n(x)^2 = k(x, x) - sum_j v_j(x)^2`` is kept for all
    candidates, where ``v_j`` are Newton basis functions. Each step costs one
    kernel column plus an ``O(N n)`` projection; the Gram matrix is never
    inverted.

    Parameters
    ----------
    X : array, shape (N, d)
        Candidate points, assumed pairwise distinct.
    k : KernelSpec
    eps_tol : float
        Target accuracy. With ``compare="squared"`` (default) the loop stops
        once ``max P^2 <= eps_tol``; with ``compare="power"`` once
        ``max P <= eps_tol``.
    max_points : int
        Hard cap on the number of selected points.
    keep_basis : bool
        Return the Newton basis values on the selected points (used by the
        tests to cross-check against a dense Gram solve).
    compute_fill : bool
        Estimate the fill distance of the selection within the candidates.
    origin_constraints : bool
        Measure the power function relative to the space already spanned by
        the value and gradient functionals at the origin, i.e. the functionals
        the fit constrains. Those ``1 + d`` functionals are not counted among
        the selected points.

    Raises
    ------
    GramBreakdown
        If the squared power at the selected point drops below ``-1e-12``.
    """
    if not eps_tol > 0:
        raise ValueError("eps_tol must be positive")
    if compare not in ("squared", "power"):
        raise ValueError("compare must be 'squared' or 'power'")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N = X.shape[0]
    n_max = min(int(max_points), N)
    threshold = eps_tol if compare == "squared" else eps_tol**2

    V = np.zeros((N, n_max))
    p2 = kernels.diag(k, X).astype(float)
    V0 = _origin_basis(k, X) if origin_constraints else np.zeros((N, 0))
    p2 -= np.sum(V0**2, axis=1)
    available = np.ones(N, dtype=bool)
    indices: list[int] = []
    history: list[float] = []
    reason = "max_points"

    def current_max():
        masked = np.where(available, p2, -np.inf)
        i = int(np.argmax(masked))  # first maximiser: lowest index wins ties
        return i, masked[i]

    i, pmax = current_max()
    history.append(float(np.sqrt(max(pmax, 0.0))))
    for n in range(n_max):
        if pmax <= threshold:
            reason = "tolerance"
            break
        if pmax < -NEG_POWER_TOL:
            raise GramBreakdown(f"negative squared power {pmax:.3e} at candidate {i}")
        col = kernels.gram(k, X, X[i : i + 1])[:, 0] - V0 @ V0[i]
        v = (col - V[:, :n] @ V[i, :n]) / np.sqrt(pmax)
        V[:, n] = v
        p2 = p2 - v**2
        p2[i] = 0.0
        available[i] = False
        indices.append(i)
        if not available.any():
            reason = "exhausted"
            history.append(0.0)
            break
        i, pmax = current_max()
        history.append(float(np.sqrt(max(pmax, 0.0))))
    else:
        if pmax <= threshold:
            reason = "tolerance"

    result = GreedyResult(
        indices, history, eps_tol, stop_reason=reason, origin_constraints=origin_constraints
    )
    if keep_basis:
        result.newton_basis = V[:, : len(indices)].copy()
    if compute_fill and indices:
        result.fill_distance = fill_distance(X[indices], X)
    return result


def _origin_functionals_gram(k: KernelSpec, d: int) -> np.ndarray:
    z = np.zeros(d)
    G = np.empty((d + 1, d + 1))
    G[0, 0] = kernels.eval(k, z, z)
    G[0, 1:] = kernels.grad2(k, z, z)
    G[1:, 0] = G[0, 1:]
    G[1:, 1:] = kernels.grad1_grad2(k, z, z)
    return G


def _origin_sections(k: KernelSpec, X: np.ndarray) -> np.ndarray:
    """Columns ``k(x, 0)`` and ``d/dz_j k(x, z)|_{z=0}`` for each row ``x``."""
    val = kernels.gram(k, X, np.zeros((1, X.shape[1])))[:, 0]
    return np.column_stack([val, kernels.grad2_section_matrix(k, X)])


def _origin_basis(k: KernelSpec, X: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(_origin_functionals_gram(k, X.shape[1]))
    return np.linalg.solve(L, _origin_sections(k, X).T).T


def power_function(Xn, k: KernelSpec, query, origin_constraints: bool = False) -> float:
    """Power function of the center set ``Xn`` at ``query``.

    Computed from a Cholesky factor of the (dense) Gram matrix. With
    ``origin_constraints`` the value and gradient functionals at the origin
    are prepended to the center set. Squared values in ``[-1e-12, 0]`` are
    clamped to zero; anything more negative raises :class:`GramBreakdown`.
    """
    query = np.atleast_2d(np.asarray(query, dtype=float))
    d = query.shape[1]
    kqq = kernels.diag(k, query)[0]
    Xn = np.asarray(Xn, dtype=float).reshape(-1, d)
    if Xn.shape[0] == 0 and not origin_constraints:
        return float(np.sqrt(kqq))
    G = kernels.gram(k, Xn)
    kq = kernels.gram(k, Xn, query)[:, 0]
    if origin_constraints:
        B = _origin_sections(k, Xn)
        G = np.block([[_origin_functionals_gram(k, d), B.T], [B, G]])
        kq = np.concatenate([_origin_sections(k, query)[0], kq])
    L = np.linalg.cholesky(G)
    w = np.linalg.solve(L, kq)
    p2 = kqq - w @ w
    if p2 < -NEG_POWER_TOL:
        raise GramBreakdown(f"negative squared power {p2:.3e}")
    return float(np.sqrt(max(p2, 0.0)))


def fill_distance(X_sel, X_ref, chunk: int = 4096) -> float:
    """``max_{x in X_ref} min_{y in X_sel} |x - y|`` (Euclidean)."""
    X_sel = np.atleast_2d(np.asarray(X_sel, dtype=float))
    X_ref = np.atleast_2d(np.asarray(X_ref, dtype=float))
    if X_sel.shape[0] == 0 or X_ref.shape[0] == 0:
        raise ValueError("fill distance needs two nonempty point sets")
    worst = 0.0
    for start in range(0, X_ref.shape[0], chunk):
        block = X_ref[start : start + chunk]
        diff = block[:, None, :] - X_sel[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)).min(axis=1)
        worst = max(worst, float(dist.max()))
    return worst
