"""Constrained, regularized kernel fit of a center manifold.

The approximant is

    h(x) = sum_i k(x, x_i) alpha_i + sum_j d/dy_j k(x, 0) beta_j

over the data centers plus ``x_{N+1} = 0``. Its coefficients solve the
symmetric saddle-point system

    [[A + W, B], [B^T, C]] (alpha, beta) = (Y, 0)

with ``A = k(x_i, x_j)``, ``B = d/dy_j k(x_i, 0)``, ``C = d/dx_i d/dy_j k(0, 0)``
and ``W = diag(lam, ..., lam, 0)``. The zero entry makes ``h(0) = 0`` an exact
constraint; the last block row enforces ``Dh(0) = 0``.

Only scalar outputs (``m = 1``) are supported.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.linalg import lapack

from . import kernels
from .kernels import KernelSpec

log = logging.getLogger(__name__)

COND_WARN = 1e16
BACKWARD_ERROR_TOL = 1e-10
REFINE_TOL = 1e-10
REFINE_MAX_STEPS = 20
CONSTRAINT_TOL = 1e-8


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitConfig:
    """Regularization value and kernel.

    ``lam`` is the value added to the data diagonal of the kernel matrix, so
    the data misfit is weighted by ``1 / lam`` in the functional.
    """

    kernel: KernelSpec
    lam: float = 1e-10

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("regularization lam must be positive")


@dataclass
class Approximant:
    centers: np.ndarray  # (N + 1, d), last row is the origin
    alpha: np.ndarray  # (N + 1,)
    beta: np.ndarray  # (d,)
    kernel: KernelSpec
    lam: float
    fit_diag: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    @property
    def m(self) -> int:
        return 1

    @property
    def n_centers(self) -> int:
        return self.centers.shape[0] - 1

    def __call__(self, x) -> np.ndarray:
        return evaluate(self, x)

    def jacobian(self, x) -> np.ndarray:
        return evaluate_jacobian(self, x)

    def evaluate_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        vals = kernels.gram(self.kernel, X, self.centers) @ self.alpha
        return vals + kernels.grad2_section_matrix(self.kernel, X) @ self.beta

    def jacobian_many(self, X) -> np.ndarray:
        """Gradients at each row of ``X``, shape ``(n, d)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        G = kernels.grad1_matrix(self.kernel, X, self.centers)
        H = kernels.grad1_grad2_section_array(self.kernel, X)
        return np.einsum("ild,l->id", G, self.alpha) + np.einsum("iab,b->ia", H, self.beta)


def _as_data(X, Y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 2:
        if Y.shape[1] != 1:
            raise NotImplementedError("only scalar manifolds (m = 1) are supported")
        Y = Y[:, 0]
    if Y.shape[0] != X.shape[0]:
        raise ValueError("X and Y differ in length")
    return X, Y


def _check_centers(X):
    if np.any(np.all(X == 0.0, axis=1)):
        raise ValueError("a data point coincides with the origin constraint center")
    if np.unique(X, axis=0).shape[0] != X.shape[0]:
        raise ValueError("duplicate centers")


def assemble_system(X, Y, config: FitConfig) -> tuple[np.ndarray, np.ndarray]:
    """Block matrix and right-hand side of the constrained fit."""
    X, Y = _as_data(X, Y)
    _check_centers(X)
    k = config.kernel
    n, d = X.shape
    centers = np.vstack([X, np.zeros((1, d))])
    A = kernels.gram(k, centers)
    A = 0.5 * (A + A.T)
    B = kernels.grad2_section_matrix(k, centers)
    C = kernels.grad1_grad2(k, np.zeros(d), np.zeros(d))
    C = 0.5 * (C + C.T)
    size = n + 1 + d
    M = np.zeros((size, size))
    M[: n + 1, : n + 1] = A
    M[np.arange(n), np.arange(n)] += config.lam
    M[: n + 1, n + 1 :] = B
    M[n + 1 :, : n + 1] = B.T
    M[n + 1 :, n + 1 :] = C
    rhs = np.zeros(size)
    rhs[:n] = Y
    return M, rhs


def _residual(M, sol, rhs):
    # extended precision so refinement can get below the double-precision
    # backward-error floor of badly conditioned systems
    Ml = M.astype(np.longdouble)
    return (rhs.astype(np.longdouble) - Ml @ sol.astype(np.longdouble)).astype(float)


def _solve_symmetric(M, rhs):
    """Bunch-Kaufman LDL^T solve plus iterative refinement; returns (sol, rcond).

    Refinement runs while the relative residual exceeds ``1e-10`` and keeps
    shrinking, for at most ``REFINE_MAX_STEPS`` steps.
    """
    lu, ipiv, info = lapack.dsytrf(M, lower=1)
    if info > 0:
        raise FitError("symmetric factorization hit an exactly singular pivot; increase lam or thin the data")
    anorm = np.linalg.norm(M, 1)
    rcond, _ = lapack.dsycon(lu, ipiv, anorm, lower=1)
    sol, info = lapack.dsytrs(lu, ipiv, rhs, lower=1)
    if info != 0:
        raise FitError(f"dsytrs failed with info={info}")
    scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    res = _residual(M, sol, rhs)
    rel = np.linalg.norm(res) / scale
    for _ in range(REFINE_MAX_STEPS):
        if rel <= REFINE_TOL:
            break
        corr, _ = lapack.dsytrs(lu, ipiv, res, lower=1)
        trial = sol + corr
        trial_res = _residual(M, trial, rhs)
        trial_rel = np.linalg.norm(trial_res) / scale
        if not trial_rel < rel:
            break
        sol, res, rel = trial, trial_res, trial_rel
    return sol, rcond


def fit(X, Y, config: FitConfig, check: bool = True) -> Approximant:
    """Solve the constrained system and return the approximant.

    Raises
    ------
    FitError
        If the factorization breaks down, if the normwise backward error of
        the solve exceeds ``1e-10``, or (with ``check``) if ``|h(0)|`` or
        ``|Dh(0)|`` exceeds ``1e-8``. ``fit_diag`` records the condition
        estimate, the relative residual and the backward error.
    """
    X, Y = _as_data(X, Y)
    M, rhs = assemble_system(X, Y, config)
    sol, rcond = _solve_symmetric(M, rhs)
    n, d = X.shape
    cond = np.inf if rcond == 0 else 1.0 / rcond
    scale = np.linalg.norm(rhs)
    res = _residual(M, sol, rhs)
    rel_res = float(np.linalg.norm(res) / scale) if scale > 0 else float(np.linalg.norm(res))
    # normwise backward error; |res| / |rhs| alone cannot go below ~eps |M| |sol| / |rhs|,
    # which for lam = 1e-13 polynomial fits is ~1e-7 even for the exact solution
    denom = np.linalg.norm(M, np.inf) * np.linalg.norm(sol, np.inf) + np.linalg.norm(rhs, np.inf)
    backward = float(np.linalg.norm(res, np.inf) / denom) if denom > 0 else 0.0
    if cond > COND_WARN:
        log.warning("kernel system condition estimate %.2e exceeds %.0e", cond, COND_WARN)
    if not np.all(np.isfinite(sol)) or backward > BACKWARD_ERROR_TOL:
        raise FitError(
            f"kernel system solve failed (backward error {backward:.2e}, relative residual {rel_res:.2e}, "
            f"condition ~{cond:.2e}); use a larger regularization or fewer, better separated centers"
        )
    centers = np.vstack([X, np.zeros((1, d))])
    approx = Approximant(
        centers=centers,
        alpha=sol[: n + 1],
        beta=sol[n + 1 :],
        kernel=config.kernel,
        lam=config.lam,
        fit_diag={"cond_estimate": cond, "relative_residual": rel_res, "backward_error": backward},
    )
    h0 = abs(evaluate(approx, np.zeros(d))[0])
    dh0 = float(np.linalg.norm(evaluate_jacobian(approx, np.zeros(d))))
    approx.fit_diag.update(h0=h0, dh0=dh0)
    if check and (h0 > CONSTRAINT_TOL or dh0 > CONSTRAINT_TOL):
        raise FitError(f"origin constraints violated: |h(0)|={h0:.2e}, |Dh(0)|={dh0:.2e}")
    return approx


def evaluate(hhat: Approximant, x) -> np.ndarray:
    """Value of the approximant at a single point, as an array of length 1."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.array([hhat.evaluate_many(x[None, :])[0]])


def evaluate_jacobian(hhat: Approximant, x) -> np.ndarray:
    """Jacobian of the approximant at a single point, shape ``(1, d)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return hhat.jacobian_many(x[None, :])


def taylor_of_approximant(hhat: Approximant, order: int = 4) -> list[tuple[tuple[int, ...], float]]:
    """Taylor coefficients of the approximant at the origin, graded-lex order."""
    k, d = hhat.kernel, hhat.d
    idxs = kernels.multi_indices(d, order)
    total = dict.fromkeys(idxs, 0.0)
    for center, a in zip(hhat.centers, hhat.alpha):
        for idx, c in kernels.taylor_coeffs_of_section(k, center, order):
            total[idx] += a * c
    for j, b in enumerate(hhat.beta):
        for idx, c in kernels.taylor_coeffs_of_grad2_section(k, j, d, order):
            total[idx] += b * c
    return [(idx, float(total[idx])) for idx in idxs]


# ---------------------------------------------------------------------------
# optimality certificate


@dataclass
class _Expansion:
    """``s = sum_l k(., z_l) a_l + sum_j d/dy_j k(., 0) b_j`` with ``z`` possibly containing 0."""

    centers: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def values(self, k, X):
        return kernels.gram(k, X, self.centers) @ self.a + kernels.grad2_section_matrix(k, X) @ self.b


def _norm_sq(k: KernelSpec, s: _Expansion) -> float:
    d = s.centers.shape[1]
    A = kernels.gram(k, s.centers)
    B = kernels.grad2_section_matrix(k, s.centers)
    C = kernels.grad1_grad2(k, np.zeros(d), np.zeros(d))
    return float(s.a @ A @ s.a + 2.0 * s.a @ B @ s.b + s.b @ C @ s.b)


def _functional(k, s: _Expansion, X, Y, lam) -> float:
    misfit = s.values(k, X) - Y
    return _norm_sq(k, s) + float(misfit @ misfit) / lam


def _combine(s: _Expansion, g: _Expansion, t: float) -> _Expansion:
    return _Expansion(np.vstack([s.centers, g.centers]), np.concatenate([s.a, t * g.a]), s.b + t * g.b)


def admissible_perturbation(k: KernelSpec, d: int, rng: np.random.Generator, n_aux: int = 5, radius: float = 0.1) -> _Expansion:
    """Random kernel expansion ``g`` with ``g(0) = 0`` and ``Dg(0) = 0``.

    ``g`` lives on random auxiliary centers; value and gradient at the origin
    are cancelled with the same origin terms the fitted approximant uses.
    """
    Z = rng.uniform(-radius, radius, size=(n_aux, d))
    c = rng.standard_normal(n_aux)
    zero = np.zeros(d)
    # origin functionals applied to the raw expansion
    val0 = kernels.gram(k, zero[None, :], Z)[0] @ c
    grad0 = kernels.grad1_matrix(k, zero[None, :], Z)[0].T @ c
    G = np.zeros((d + 1, d + 1))
    G[0, 0] = kernels.eval(k, zero, zero)
    G[0, 1:] = kernels.grad2(k, zero, zero)
    G[1:, 0] = kernels.grad1(k, zero, zero)
    G[1:, 1:] = kernels.grad1_grad2(k, zero, zero)
    coef = np.linalg.solve(G, -np.concatenate([[val0], grad0]))
    return _Expansion(np.vstack([Z, zero[None, :]]), np.concatenate([c, coef[:1]]), coef[1:])


@dataclass
class CertificateReport:
    trials: int
    J_hat: float
    increments: np.ndarray
    violations: list[int]

    @property
    def ok(self) -> bool:
        return not self.violations


def functional_value(hhat: Approximant, X, Y) -> float:
    """``J(hhat) = |hhat|_H^2 + sum_i (hhat(x_i) - y_i)^2 / lam``."""
    X, Y = _as_data(X, Y)
    s = _Expansion(hhat.centers, hhat.alpha, hhat.beta)
    return _functional(hhat.kernel, s, X, Y, hhat.lam)


def perturbed_functional(hhat: Approximant, X, Y, g: _Expansion, t: float = 1.0) -> float:
    X, Y = _as_data(X, Y)
    s = _combine(_Expansion(hhat.centers, hhat.alpha, hhat.beta), g, t)
    return _functional(hhat.kernel, s, X, Y, hhat.lam)


def minimizer_certificate(hhat: Approximant, X, Y, trials: int = 100, seed: int = 0, rel_tol: float = 1e-9) -> CertificateReport:
    """Check ``J(hhat + g) >= J(hhat)`` for random admissible ``g``.

    The trial with seed offset ``i`` uses ``numpy.random.default_rng(seed + i)``,
    so any violation can be replayed on its own.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    X, Y = _as_data(X, Y)
    J0 = functional_value(hhat, X, Y)
    increments = np.empty(trials)
    violations = []
    for i in range(trials):
        g = admissible_perturbation(hhat.kernel, hhat.d, np.random.default_rng(seed + i))
        increments[i] = perturbed_functional(hhat, X, Y, g) - J0
        if increments[i] < -rel_tol * (1.0 + J0):
            violations.append(seed + i)
    return CertificateReport(trials, J0, increments, violations)


# ---------------------------------------------------------------------------
# serialization

_HEADER = "# kcm approximant v1"


def save_approximant(hhat: Approximant, path) -> None:
    """Write a flat text file; floats use ``repr`` so they round-trip exactly."""
    lines = [_HEADER, f"family = {hhat.kernel.family}"]
    for key, val in hhat.kernel.params.items():
        lines.append(f"param.{key} = {val!r}")
    lines += [f"lambda = {hhat.lam!r}", f"d = {hhat.d}", f"m = 1", f"n_centers = {hhat.n_centers}", "[centers]"]
    lines += [" ".join(repr(float(v)) for v in row) for row in hhat.centers]
    lines.append("[alpha]")
    lines += [repr(float(v)) for v in hhat.alpha]
    lines.append("[beta]")
    lines += [repr(float(v)) for v in hhat.beta]
    Path(path).write_text("\n".join(lines) + "\n")


def load_approximant(path) -> Approximant:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != _HEADER:
        raise ValueError(f"{path} is not a kcm approximant file")
    meta: dict = {}
    sections: dict = {}
    current: Optional[str] = None
    for line in text[1:]:
        line = line.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        elif current is None:
            key, _, val = line.partition("=")
            meta[key.strip()] = val.strip()
        else:
            sections[current].append([float(v) for v in line.split()])
    params = {k[len("param."):]: float(v) for k, v in meta.items() if k.startswith("param.")}
    if "p" in params:
        params["p"] = int(params["p"])
    for key in ("p_d", "p_k"):
        if key in params:
            params[key] = int(params[key])
    kernel = KernelSpec(meta["family"], **params)
    return Approximant(
        centers=np.array(sections["centers"], dtype=float).reshape(-1, int(meta["d"])),
        alpha=np.array(sections["alpha"], dtype=float).ravel(),
        beta=np.array(sections["beta"], dtype=float).ravel(),
        kernel=kernel,
        lam=float(meta["lambda"]),
    )
