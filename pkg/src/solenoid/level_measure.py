"""The invariant area measure induced on level sets of a first integral.

Writing the ambient volume as Omega = dF ^ beta along a regular level of F,
the restriction of beta to the level is unique; it equals i_n Omega for ANY
vector n normalized by dF(n) = 1, and evaluates on tangent pairs as

    beta(u, v) = rho * det[n u v].

A metric enters only through the convenience constructor of a concrete n
(the metric-orthogonal one); the measure itself is metric-free.  Because the
flow of a divergence-free field preserving F preserves both Omega and the
levels, it preserves beta -- `invariance_residual` quantifies that, and
`bracket_tangency_defect` checks the infinitesimal version dF([X, n]) = 0.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .flow import DEFAULT_CONFIG, IntegratorConfig, advance

__all__ = [
    "SingularGradient",
    "OffLevel",
    "NonTangent",
    "normal_field",
    "tangent_basis",
    "omega_n_eval",
    "invariance_residual",
    "lie_bracket_fd",
    "bracket_tangency_defect",
    "liouville_check",
]

_GRAD_FLOOR = 1e-12


class SingularGradient(Exception):
    """grad F vanishes: the level set is not a manifold here."""


class OffLevel(Exception):
    pass


class NonTangent(Exception):
    pass


def normal_field(integral, x, metric: Optional[np.ndarray] = None) -> np.ndarray:
    """The metric-orthogonal transversal n with dF(n) = 1.

    n = g^{-1} grad F / (grad F . g^{-1} grad F); identity metric by default.
    """
    x = np.asarray(x, dtype=float)
    g = integral.gradient(x)
    if metric is None:
        gg = g
    else:
        metric = np.asarray(metric, dtype=float)
        gg = np.linalg.solve(metric, g)
    denom = float(np.dot(g, gg))
    if denom < _GRAD_FLOOR:
        raise SingularGradient(
            f"|grad F|^2 = {denom:.3e} at x = {np.round(x, 6)}"
        )
    return gg / denom


def tangent_basis(integral, x) -> np.ndarray:
    """Orthonormal (3, 2) basis of ker dF at x, built from the two coordinate
    directions with the largest projection onto the level."""
    x = np.asarray(x, dtype=float)
    g = integral.gradient(x)
    g2 = float(np.dot(g, g))
    if g2 < _GRAD_FLOOR:
        raise SingularGradient(f"|grad F|^2 = {g2:.3e} at x = {np.round(x, 6)}")
    proj = np.eye(3) - np.outer(g, g) / g2
    norms = np.linalg.norm(proj, axis=0)
    cols = np.argsort(norms)[-2:]
    Q, _ = np.linalg.qr(proj[:, cols])
    return Q


def _tangency(integral, x, vec) -> float:
    g = integral.gradient(x)
    ng = np.linalg.norm(g)
    nv = np.linalg.norm(vec)
    if ng == 0.0 or nv == 0.0:
        return math.inf
    return abs(float(np.dot(g, vec))) / (ng * nv)


def omega_n_eval(integral, volume, x, u, v, level: Optional[float] = None,
                 tangent_tol: float = 1e-8) -> float:
    """beta(u, v) = rho det[n u v] for tangent vectors u, v at x.

    Raises OffLevel if a target level is given and F(x) misses it, and
    NonTangent when u or v sticks out of the level (relative test against
    ``tangent_tol``); the value would be chart-dependent in either case.
    """
    x = np.asarray(x, dtype=float)
    if level is not None:
        miss = abs(integral.eval(x) - level)
        if miss > 1e-9 * max(1.0, abs(level)):
            raise OffLevel(f"F(x) - c = {integral.eval(x) - level:.3e}")
    for name, vec in (("u", u), ("v", v)):
        t = _tangency(integral, x, vec)
        if t > tangent_tol:
            raise NonTangent(f"{name} is not tangent to the level (ratio {t:.3e})")
    n = normal_field(integral, x)
    tri = np.column_stack([n, u, v]).astype(float)
    return volume.density(x) * float(np.linalg.det(tri))


def invariance_residual(field, integral, volume, x, u, v, t: float,
                        cfg: IntegratorConfig = DEFAULT_CONFIG,
                        prefer=None) -> float:
    """Relative defect of beta(Df^t u, Df^t v) at f^t(x) against beta(u, v).

    The advected pair is tangent only up to integrator error, so the
    tangency gate is relaxed to 1e-6 here.
    """
    x = np.asarray(x, dtype=float)
    before = omega_n_eval(integral, volume, x, u, v)
    res = advance(field, x, t, cfg, with_monodromy=True, prefer=prefer)
    after = omega_n_eval(integral, volume, res.x, res.monodromy @ np.asarray(u, float),
                         res.monodromy @ np.asarray(v, float), tangent_tol=1e-6)
    return abs(after - before) / max(abs(before), 1e-14)


def lie_bracket_fd(xfun, yfun, x, h: float = 1e-5) -> np.ndarray:
    """[X, Y](x) = DY(x) X(x) - DX(x) Y(x) with central-difference Jacobians."""
    x = np.asarray(x, dtype=float)

    def jac(f):
        J = np.empty((3, 3))
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            J[:, j] = (np.asarray(f(x + e), float) - np.asarray(f(x - e), float)) / (2 * h)
        return J

    return jac(yfun) @ np.asarray(xfun(x), float) - jac(xfun) @ np.asarray(yfun(x), float)


def bracket_tangency_defect(field, integral, x, metric: Optional[np.ndarray] = None,
                            h: float = 1e-5) -> float:
    """|dF([X, n])|: zero because dF(n) = 1 and dF(X) = 0 are both constant.

    Uses the finite-difference bracket, so the defect carries O(h^2) noise.
    """
    x = np.asarray(x, dtype=float)
    bracket = lie_bracket_fd(
        lambda p: field.eval(p),
        lambda p: normal_field(integral, p, metric=metric),
        x, h=h,
    )
    return abs(float(np.dot(integral.gradient(x), bracket)))


def liouville_check(field, integral, volume, points, t: float = 1.0,
                    level: Optional[float] = None,
                    metric: Optional[np.ndarray] = None,
                    cfg: IntegratorConfig = DEFAULT_CONFIG,
                    prefer=None) -> dict:
    """Audit the level measure over a batch of points; JSON-friendly report.

    Per point: normalization dF(n) = 1, invariance of beta under the time-t
    flow for an advected tangent pair, and the bracket tangency defect.
    Points where the level structure degenerates (singular gradient, advected
    pair too oblique, off-level) are listed in ``excluded_points`` with the
    reason instead of poisoning the aggregates.
    """
    rows = []
    excluded = []
    for idx, p in enumerate(np.atleast_2d(np.asarray(points, dtype=float))):
        try:
            if level is not None:
                miss = abs(integral.eval(p) - level)
                if miss > 1e-9 * max(1.0, abs(level)):
                    raise OffLevel(f"|F - c| = {miss:.3e}")
            n = normal_field(integral, p, metric=metric)
            norm_defect = abs(float(np.dot(integral.gradient(p), n)) - 1.0)
            U = tangent_basis(integral, p)
            inv = invariance_residual(field, integral, volume, p, U[:, 0], U[:, 1],
                                      t, cfg=cfg, prefer=prefer)
            br = bracket_tangency_defect(field, integral, p, metric=metric)
            rows.append(
                {
                    "index": int(idx),
                    "point": [float(c) for c in p],
                    "normalization_defect": float(norm_defect),
                    "invariance_residual": float(inv),
                    "bracket_defect": float(br),
                }
            )
        except (SingularGradient, OffLevel, NonTangent) as err:
            excluded.append(
                {
                    "index": int(idx),
                    "point": [float(c) for c in p],
                    "reason": f"{type(err).__name__}: {err}",
                }
            )
    report = {
        "field": getattr(field, "name", "anonymous"),
        "integral": getattr(integral, "name", "anonymous"),
        "advect_time": float(t),
        "level": None if level is None else float(level),
        "checked": len(rows),
        "excluded": len(excluded),
        "points": rows,
        "excluded_points": excluded,
    }
    if rows:
        report["max_normalization_defect"] = max(r["normalization_defect"] for r in rows)
        report["max_invariance_residual"] = max(r["invariance_residual"] for r in rows)
        report["max_bracket_defect"] = max(r["bracket_defect"] for r in rows)
    return report
