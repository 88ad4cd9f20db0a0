"""Dynamical systems in split center/stable form and the registered examples."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

FD_STEP = 1e-7


@dataclass(frozen=True)
class SplitSystem:
    """``x' = L1 x + N1(x, y)``, ``y' = L2 y + N2(x, y)``.

    ``x`` has the center dimension ``d`` and ``y`` the stable dimension ``m``.
    Jacobians of the nonlinear parts map ``(x, y)`` to arrays of shape
    ``(d, d + m)`` and ``(m, d + m)``; when missing, central differences are
    used.
    """

    d: int
    m: int
    L1: np.ndarray
    L2: np.ndarray
    N1: Callable[[np.ndarray, np.ndarray], np.ndarray]
    N2: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jac_N1: Optional[Callable] = None
    jac_N2: Optional[Callable] = None
    name: str = "custom"

    def __post_init__(self):
        L1 = np.atleast_2d(np.asarray(self.L1, dtype=float))
        L2 = np.atleast_2d(np.asarray(self.L2, dtype=float))
        if L1.shape != (self.d, self.d) or L2.shape != (self.m, self.m):
            raise ValueError("L1/L2 shapes do not match (d, m)")
        L1.setflags(write=False)
        L2.setflags(write=False)
        object.__setattr__(self, "L1", L1)
        object.__setattr__(self, "L2", L2)
        self.validate()

    @property
    def n(self) -> int:
        return self.d + self.m

    def validate(self, tol_origin: float = 1e-14, tol_eig: float = 1e-10):
        """Check the split-form assumptions at the origin."""
        zx, zy = np.zeros(self.d), np.zeros(self.m)
        if np.max(np.abs(self.N1(zx, zy)), initial=0.0) > tol_origin:
            raise ValueError("N1(0, 0) != 0")
        if np.max(np.abs(self.N2(zx, zy)), initial=0.0) > tol_origin:
            raise ValueError("N2(0, 0) != 0")
        re1 = np.linalg.eigvals(self.L1).real
        re2 = np.linalg.eigvals(self.L2).real
        if np.any(np.abs(re1) > tol_eig):
            raise ValueError(f"L1 has eigenvalues off the imaginary axis: {re1}")
        if np.any(re2 >= -tol_eig):
            raise ValueError(f"L2 is not strictly stable: {re2}")

    def split(self, state):
        state = np.asarray(state, dtype=float)
        return state[: self.d], state[self.d :]

    def jacobian_N(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """Jacobians of ``N1`` and ``N2`` with respect to ``(x, y)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        J1 = self.jac_N1(x, y) if self.jac_N1 is not None else _fd_jacobian(self.N1, x, y)
        J2 = self.jac_N2(x, y) if self.jac_N2 is not None else _fd_jacobian(self.N2, x, y)
        return np.atleast_2d(J1), np.atleast_2d(J2)

    def jacobian(self, state) -> np.ndarray:
        """Jacobian of the full right-hand side."""
        x, y = self.split(state)
        J1, J2 = self.jacobian_N(x, y)
        J = np.vstack([J1, J2])
        J[: self.d, : self.d] += self.L1
        J[self.d :, self.d :] += self.L2
        return J

    def rhs(self, state) -> np.ndarray:
        x, y = self.split(state)
        return full_rhs(self, x, y)


def _fd_jacobian(fun, x, y, h: float = FD_STEP) -> np.ndarray:
    z = np.concatenate([x, y])
    d = x.size
    cols = []
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        zp, zm = z + e, z - e
        cols.append((np.asarray(fun(zp[:d], zp[d:])) - np.asarray(fun(zm[:d], zm[d:]))) / (2 * h))
    return np.column_stack(cols)


def full_rhs(sys: SplitSystem, x, y) -> np.ndarray:
    """Concatenated ``(L1 x + N1(x, y), L2 y + N2(x, y))``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise FloatingPointError(f"non-finite input state x={x}, y={y}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.concatenate([sys.L1 @ x + sys.N1(x, y), sys.L2 @ y + sys.N2(x, y)])
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"right-hand side overflowed at x={x}, y={y}")
    return out


# ---------------------------------------------------------------------------
# registered examples


def _example1() -> SplitSystem:
    return SplitSystem(
        d=1,
        m=1,
        L1=[[0.0]],
        L2=[[-1.0]],
        N1=lambda x, y: np.array([x[0] * y[0]]),
        N2=lambda x, y: np.array([-x[0] ** 2]),
        jac_N1=lambda x, y: np.array([[y[0], x[0]]]),
        jac_N2=lambda x, y: np.array([[-2.0 * x[0], 0.0]]),
        name="example1",
    )


def _example2() -> SplitSystem:
    return SplitSystem(
        d=1,
        m=1,
        L1=[[0.0]],
        L2=[[-1.0]],
        N1=lambda x, y: np.array([-x[0] * y[0]]),
        N2=lambda x, y: np.array([x[0] ** 2 - 2.0 * y[0] ** 2]),
        jac_N1=lambda x, y: np.array([[-y[0], -x[0]]]),
        jac_N2=lambda x, y: np.array([[2.0 * x[0], -4.0 * y[0]]]),
        name="example2",
    )


def _example3() -> SplitSystem:
    return SplitSystem(
        d=2,
        m=1,
        L1=[[0.0, -1.0], [1.0, 0.0]],
        L2=[[-1.0]],
        N1=lambda x, y: y[0] * x,
        N2=lambda x, y: np.array([-x[0] ** 2 - x[1] ** 2 + y[0] ** 2]),
        jac_N1=lambda x, y: np.array([[y[0], 0.0, x[0]], [0.0, y[0], x[1]]]),
        jac_N2=lambda x, y: np.array([[-2.0 * x[0], -2.0 * x[1], 2.0 * y[0]]]),
        name="example3",
    )


_REGISTRY = {1: _example1, 2: _example2, 3: _example3}


def register_example(id: int) -> SplitSystem:  # noqa: A002
    """The split system of example 1, 2 or 3."""
    try:
        return _REGISTRY[int(id)]()
    except (KeyError, ValueError, TypeError):
        raise ValueError(f"unknown example id {id!r}; expected 1, 2 or 3") from None


@dataclass(frozen=True)
class ReferenceManifold:
    """A closed-form (exact or truncated algebraic) center manifold.

    ``taylor`` lists ``(multi_index, coefficient)`` pairs; ``expr`` and
    ``jacobian`` evaluate the stored polynomial.
    """

    d: int
    taylor: tuple
    kind: str

    @property
    def m(self) -> int:
        return 1

    def expr(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        val = sum(c * np.prod(x ** np.array(a)) for a, c in self.taylor)
        return np.array([val])

    def jacobian(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        grad = np.zeros(self.d)
        for a, c in self.taylor:
            for i, ai in enumerate(a):
                if ai == 0:
                    continue
                b = list(a)
                b[i] -= 1
                grad[i] += c * ai * np.prod(x ** np.array(b))
        return grad[None, :]

    def __call__(self, x) -> np.ndarray:
        return self.expr(x)

    def evaluate_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(X.shape[0])
        for a, c in self.taylor:
            out += c * np.prod(X ** np.array(a), axis=1)
        return out

    def jacobian_many(self, X) -> np.ndarray:
        """Gradients at the rows of ``X``, shape ``(n, d)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.vstack([self.jacobian(x) for x in X])


_REFERENCES = {
    # -x^2 - 2x^4, truncated algebraic expansion
    1: ReferenceManifold(1, (((2,), -1.0), ((4,), -2.0)), "algebraic-order-4"),
    # exact: x^2
    2: ReferenceManifold(1, (((2,), 1.0),), "exact"),
    # -(x1^2 + x2^2) - 3 (x1^2 + x2^2)^2
    3: ReferenceManifold(
        2,
        (
            ((2, 0), -1.0),
            ((0, 2), -1.0),
            ((4, 0), -3.0),
            ((2, 2), -6.0),
            ((0, 4), -3.0),
        ),
        "algebraic-order-4",
    ),
}


def reference_manifold(id: int) -> ReferenceManifold:  # noqa: A002
    try:
        return _REFERENCES[int(id)]
    except (KeyError, ValueError, TypeError):
        raise ValueError(f"unknown example id {id!r}; expected 1, 2 or 3") from None
