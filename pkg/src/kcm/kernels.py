"""Scalar kernels with analytic derivatives and Taylor data of kernel sections.

Three families are supported:

* ``polynomial``: ``k(x, y) = (1 + gamma * x.y)**p``
* ``gaussian``: ``k(x, y) = exp(-eps * |x - y|**2)``
* ``wendland``: ``k(x, y) = (1 - r)_+**3 (1 + 3 r)`` with ``r = |x - y|``
  (space dimension 1, smoothness 1, support radius 1)

Derivative naming follows the argument being differentiated: ``grad1`` acts
on ``x``, ``grad2`` on ``y``. ``grad1_grad2(k, x, y)[i, j]`` is
``d/dx_i d/dy_j k(x, y)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

FAMILIES = ("polynomial", "gaussian", "wendland")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its parameters.

    Parameters
    ----------
    family : str
        One of ``polynomial``, ``gaussian``, ``wendland``.
    gamma, p : float, int
        Polynomial scale and degree.
    eps : float
        Gaussian shape parameter.
    p_d, p_k : int
        Wendland space dimension and smoothness; only ``(1, 1)`` exists.
    """

    family: str
    gamma: float = 0.5
    p: int = 4
    eps: float = 1.0
    p_d: int = 1
    p_k: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family == "polynomial":
            if not self.gamma > 0:
                raise ValueError("polynomial kernel needs gamma > 0")
            if int(self.p) != self.p or self.p < 1:
                raise ValueError("polynomial kernel needs an integer degree p >= 1")
            object.__setattr__(self, "p", int(self.p))
        elif self.family == "gaussian":
            if not self.eps > 0:
                raise ValueError("gaussian kernel needs eps > 0")
        elif (self.p_d, self.p_k) != (1, 1):
            raise ValueError("only the Wendland kernel with p_d=1, p_k=1 is implemented")

    @classmethod
    def polynomial(cls, p: int = 4, gamma: float = 0.5) -> "KernelSpec":
        return cls("polynomial", gamma=gamma, p=p)

    @classmethod
    def gaussian(cls, eps: float = 1.0) -> "KernelSpec":
        return cls("gaussian", eps=eps)

    @classmethod
    def wendland(cls) -> "KernelSpec":
        return cls("wendland")

    @property
    def params(self) -> dict:
        if self.family == "polynomial":
            return {"gamma": self.gamma, "p": self.p}
        if self.family == "gaussian":
            return {"eps": self.eps}
        return {"p_d": self.p_d, "p_k": self.p_k}

    @property
    def label(self) -> str:
        if self.family == "polynomial":
            return f"poly{self.p}"
        if self.family == "gaussian":
            return f"gauss{self.eps:g}"
        return "wendland"


def _pair(x, y):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return x, y


def _wendland_phi(r):
    # (1-r)^3 (1+3r) expanded; zero outside the support
    return np.where(r < 1.0, 1.0 - 6.0 * r**2 + 8.0 * r**3 - 3.0 * r**4, 0.0)


def eval(k: KernelSpec, x, y) -> float:  # noqa: A001 - mirrors the kernel operation name
    """Kernel value ``k(x, y)``."""
    x, y = _pair(x, y)
    if k.family == "polynomial":
        return float((1.0 + k.gamma * (x @ y)) ** k.p)
    if k.family == "gaussian":
        diff = x - y
        return float(np.exp(-k.eps * (diff @ diff)))
    return float(_wendland_phi(np.linalg.norm(x - y)))


def grad2(k: KernelSpec, x, y) -> np.ndarray:
    """Gradient of ``y -> k(x, y)``."""
    x, y = _pair(x, y)
    if k.family == "polynomial":
        return k.p * k.gamma * (1.0 + k.gamma * (x @ y)) ** (k.p - 1) * x
    diff = x - y
    if k.family == "gaussian":
        return 2.0 * k.eps * np.exp(-k.eps * (diff @ diff)) * diff
    r = np.linalg.norm(diff)
    if r >= 1.0:
        return np.zeros_like(x)
    return 12.0 * (1.0 - r) ** 2 * diff


def grad1(k: KernelSpec, x, y) -> np.ndarray:
    """Gradient of ``x -> k(x, y)``."""
    return grad2(k, y, x)


def grad1_grad2(k: KernelSpec, x, y) -> np.ndarray:
    """Mixed second derivatives, entry ``[i, j] = d/dx_i d/dy_j k(x, y)``."""
    x, y = _pair(x, y)
    d = x.size
    eye = np.eye(d)
    if k.family == "polynomial":
        u = 1.0 + k.gamma * (x @ y)
        out = k.p * k.gamma * u ** (k.p - 1) * eye
        if k.p > 1:
            out = out + k.p * (k.p - 1) * k.gamma**2 * u ** (k.p - 2) * np.outer(y, x)
        return out
    diff = x - y
    if k.family == "gaussian":
        val = np.exp(-k.eps * (diff @ diff))
        return 2.0 * k.eps * val * (eye - 2.0 * k.eps * np.outer(diff, diff))
    r = np.linalg.norm(diff)
    if r >= 1.0:
        return np.zeros((d, d))
    out = 12.0 * (1.0 - r) ** 2 * eye
    if r > 0.0:
        out = out - 24.0 * (1.0 - r) / r * np.outer(diff, diff)
    return out


def grad1_of_grad2_section(k: KernelSpec, x) -> np.ndarray:
    """Jacobian of ``x -> grad2(k, x, 0)``.

    Row ``j`` holds the gradient of the ``j``-th section ``d/dy_j k(x, 0)``,
    so the result is the transpose of ``grad1_grad2(k, x, 0)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return grad1_grad2(k, x, np.zeros_like(x)).T


# ---------------------------------------------------------------------------
# vectorised blocks used by the solver and by the greedy selection


def gram(k: KernelSpec, X, Y=None) -> np.ndarray:
    """Kernel matrix ``[k(X[i], Y[j])]`` for point arrays of shape ``(n, d)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise ValueError("dimension mismatch")
    if k.family == "polynomial":
        return (1.0 + k.gamma * (X @ Y.T)) ** k.p
    sq = _sqdist(X, Y)
    if k.family == "gaussian":
        return np.exp(-k.eps * sq)
    return _wendland_phi(np.sqrt(sq))


def diag(k: KernelSpec, X) -> np.ndarray:
    """``k(x, x)`` for each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if k.family == "polynomial":
        return (1.0 + k.gamma * np.einsum("ij,ij->i", X, X)) ** k.p
    return np.ones(X.shape[0])


def grad1_matrix(k: KernelSpec, X, Y) -> np.ndarray:
    """Array ``G[i, l, :] = grad1(k, X[i], Y[l])`` of shape ``(n, n_y, d)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if k.family == "polynomial":
        u = 1.0 + k.gamma * (X @ Y.T)
        return (k.p * k.gamma * u ** (k.p - 1))[:, :, None] * Y[None, :, :]
    diff = X[:, None, :] - Y[None, :, :]
    if k.family == "gaussian":
        val = np.exp(-k.eps * np.einsum("ijk,ijk->ij", diff, diff))
        return -2.0 * k.eps * val[:, :, None] * diff
    r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    w = np.where(r < 1.0, -12.0 * (1.0 - r) ** 2, 0.0)
    return w[:, :, None] * diff


def grad2_section_matrix(k: KernelSpec, X) -> np.ndarray:
    """``B[i, j] = d/dy_j k(X[i], 0)``, shape ``(n, d)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return grad1_matrix(k, np.zeros((1, X.shape[1])), X)[0]


def grad1_grad2_section_array(k: KernelSpec, X) -> np.ndarray:
    """``H[i, a, b] = d/dx_a d/dy_b k(X[i], 0)``, shape ``(n, d, d)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    eye = np.eye(d)
    if k.family == "polynomial":
        # at y = 0 the outer(y, x) term drops out
        return np.broadcast_to(k.p * k.gamma * eye, (n, d, d)).copy()
    if k.family == "gaussian":
        val = np.exp(-k.eps * np.einsum("ij,ij->i", X, X))
        outer = np.einsum("ia,ib->iab", X, X)
        return 2.0 * k.eps * val[:, None, None] * (eye[None] - 2.0 * k.eps * outer)
    r = np.sqrt(np.einsum("ij,ij->i", X, X))
    inside = r < 1.0
    safe = np.where(r > 0.0, r, 1.0)
    outer = np.einsum("ia,ib->iab", X, X)
    out = (12.0 * (1.0 - r) ** 2)[:, None, None] * eye[None]
    out = out - (24.0 * (1.0 - r) / safe * (r > 0.0))[:, None, None] * outer
    return out * inside[:, None, None]


def _sqdist(X, Y):
    diff = X[:, None, :] - Y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


# ---------------------------------------------------------------------------
# Taylor data of sections at the origin


def multi_indices(d: int, order: int) -> list[tuple[int, ...]]:
    """All multi-indices with ``|a| <= order`` in graded-lexicographic order.

    Within one degree the exponent of ``x_1`` decreases first, so for
    ``d = 2`` the degree-2 block reads ``x1^2, x1 x2, x2^2``.
    """
    out = []
    for deg in range(order + 1):
        block = [a for a in itertools.product(range(deg, -1, -1), repeat=d) if sum(a) == deg]
        block.sort(reverse=True)
        out.extend(block)
    return out


def _multinomial(a) -> float:
    return math.factorial(sum(a)) / math.prod(math.factorial(ai) for ai in a)


def _exp_series(g: np.ndarray, order: int) -> np.ndarray:
    """Coefficients of ``exp(g(t))`` for a univariate polynomial ``g``.

    Uses ``n f_n = sum_k k g_k f_{n-k}`` from ``f' = g' f``.
    """
    f = np.zeros(order + 1)
    f[0] = math.exp(g[0])
    for n in range(1, order + 1):
        acc = 0.0
        for j in range(1, min(n, len(g) - 1) + 1):
            acc += j * g[j] * f[n - j]
        f[n] = acc / n
    return f


def _poly_mul_trunc(a: dict, b: dict, order: int) -> dict:
    out: dict = {}
    for ia, ca in a.items():
        for ib, cb in b.items():
            idx = tuple(p + q for p, q in zip(ia, ib))
            if sum(idx) <= order:
                out[idx] = out.get(idx, 0.0) + ca * cb
    return out


def _gaussian_section_dict(eps: float, center: np.ndarray, order: int) -> dict:
    d = center.size
    series: dict = {(0,) * d: 1.0}
    for i in range(d):
        c = center[i]
        univariate = _exp_series(np.array([-eps * c * c, 2.0 * eps * c, -eps]), order)
        factor = {}
        for n, coef in enumerate(univariate):
            idx = [0] * d
            idx[i] = n
            factor[tuple(idx)] = coef
        series = _poly_mul_trunc(series, factor, order)
    return series


def _check_taylor_args(k: KernelSpec, center: np.ndarray, order: int):
    if order < 0 or order > 4:
        raise ValueError("Taylor order must lie in 0..4")
    if k.family == "wendland":
        if center.size != 1:
            raise ValueError("Wendland Taylor data is only available for d = 1")
        r = abs(center[0])
        if r >= 1.0:
            raise ValueError("Wendland section is not analytic at 0 for |center| >= 1")
        if r == 0.0:
            raise ValueError("Wendland section centred at 0 has an |x|^3 kink; no Taylor series")


def taylor_coeffs_of_section(k: KernelSpec, center, order: int = 4) -> list[tuple[tuple[int, ...], float]]:
    """Taylor coefficients at ``x = 0`` of ``x -> k(x, center)``.

    Coefficients follow the ``d^a f(0) / a!`` convention and are returned as
    ``(multi_index, coefficient)`` pairs in graded-lex order.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    _check_taylor_args(k, center, order)
    d = center.size
    idxs = multi_indices(d, order)
    if k.family == "polynomial":
        coeffs = {
            a: math.comb(k.p, sum(a)) * k.gamma ** sum(a) * _multinomial(a) * float(np.prod(center ** np.array(a)))
            for a in idxs
        }
    elif k.family == "gaussian":
        coeffs = _gaussian_section_dict(k.eps, center, order)
    else:
        coeffs = _wendland_section_1d(center[0], order)
    return [(a, float(coeffs.get(a, 0.0))) for a in idxs]


def taylor_coeffs_of_grad2_section(k: KernelSpec, j: int, d: int, order: int = 4) -> list[tuple[tuple[int, ...], float]]:
    """Taylor coefficients at ``x = 0`` of ``x -> d/dy_j k(x, 0)``."""
    center = np.zeros(d)
    _check_taylor_args(k, center, order)
    idxs = multi_indices(d, order)
    e_j = tuple(1 if i == j else 0 for i in range(d))
    if k.family == "polynomial":
        coeffs = {e_j: k.p * k.gamma}
    else:
        # d/dy_j exp(-eps|x-y|^2) at y=0 is 2 eps x_j exp(-eps|x|^2)
        base = _gaussian_section_dict(k.eps, center, order)
        coeffs = _poly_mul_trunc(base, {e_j: 2.0 * k.eps}, order)
    return [(a, float(coeffs.get(a, 0.0))) for a in idxs]


def _wendland_section_1d(c: float, order: int) -> dict:
    # near x = 0 we have |x - c| = s (x - c) with s = -sign(c)
    s = -math.copysign(1.0, c)
    # phi(r) = 1 - 6 r^2 + 8 r^3 - 3 r^4, with r = s (x - c)
    phi = {0: 1.0, 2: -6.0, 3: 8.0, 4: -3.0}
    out = {}
    for power, a in phi.items():
        scale = a * s**power
        for n in range(power + 1):
            if n <= order:
                # (x - c)^power = sum_n C(power, n) x^n (-c)^(power - n)
                out[(n,)] = out.get((n,), 0.0) + scale * math.comb(power, n) * (-c) ** (power - n)
    return out
