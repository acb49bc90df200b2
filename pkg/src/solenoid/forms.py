"""The contraction 2-form of a field with the ambient volume form.

For a volume form ``rho dx^dy^dz`` and a vector field X, the 2-form
``omega = i_X (rho dx^dy^dz)`` acts on a pair of vectors as the signed
rho-volume of the parallelepiped they span together with X:

    omega(xi, eta) = rho * det[X xi eta].

Everything here works with the plain skew matrix W of that bilinear form,
``omega(xi, eta) = xi . W eta``, so downstream symplecticity checks reduce to
matrix algebra.  X itself always spans the kernel of W; restricted to any
plane transverse to X the form is nondegenerate wherever rho > 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "skew_contraction",
    "omega_matrix",
    "omega_form",
    "pullback",
    "volume_eval",
    "TwoFormAtPoint",
]


def skew_contraction(vec, rho: float = 1.0) -> np.ndarray:
    """Skew matrix W with xi . W eta = rho * det[vec xi eta]."""
    x1, x2, x3 = (float(v) for v in vec)
    return rho * np.array(
        [
            [0.0, x3, -x2],
            [-x3, 0.0, x1],
            [x2, -x1, 0.0],
        ]
    )


def omega_matrix(field, volume, x) -> np.ndarray:
    """W of i_X(rho dV) at the point x."""
    x = np.asarray(x, dtype=float)
    return skew_contraction(field.eval(x), volume.density(x))


def pullback(W: np.ndarray, L: np.ndarray) -> np.ndarray:
    """Matrix of the pulled-back form (xi, eta) -> omega(L xi, L eta).

    L^T W L is skew up to round-off; antisymmetrizing keeps later
    eigenvalue/determinant work clean.
    """
    M = L.T @ W @ L
    return 0.5 * (M - M.T)


def volume_eval(volume, x, u, v, w) -> float:
    """rho(x) * det[u v w]: the volume form on an ordered triple."""
    x = np.asarray(x, dtype=float)
    tri = np.column_stack([u, v, w]).astype(float)
    return volume.density(x) * float(np.linalg.det(tri))


@dataclass(frozen=True)
class TwoFormAtPoint:
    """omega at a fixed point, carried as its skew matrix."""

    point: np.ndarray
    matrix: np.ndarray

    def apply(self, xi, eta) -> float:
        return float(np.dot(np.asarray(xi, float), self.matrix @ np.asarray(eta, float)))

    def restrict(self, basis: np.ndarray) -> np.ndarray:
        """2x2 matrix of omega on the plane spanned by the columns of a
        (3, 2) basis."""
        basis = np.asarray(basis, dtype=float)
        if basis.shape != (3, 2):
            raise ValueError(f"basis must be (3, 2), got {basis.shape}")
        return pullback(self.matrix, basis)

    def plane_coefficient(self, u, v) -> float:
        """omega(u, v): the single number a skew form carries on a plane."""
        return self.apply(u, v)

    def kernel_residual(self, vec) -> float:
        """|W vec|: zero exactly when vec lies in the kernel of omega."""
        return float(np.linalg.norm(self.matrix @ np.asarray(vec, float)))


def omega_form(field, volume, x) -> TwoFormAtPoint:
    x = np.asarray(x, dtype=float)
    return TwoFormAtPoint(point=x.copy(), matrix=omega_matrix(field, volume, x))
