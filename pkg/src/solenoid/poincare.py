"""Section return maps and their tangent maps.

The return map to a transversal section inherits an invariant area form from
the ambient construction: if ``omega = i_X(rho dV)``, the return map P
satisfies ``P^* omega = omega`` on the section.  Numerically that is the
scalar identity

    det(DP) * w(P x) = w(x),      w(y) = rho(y) det[X(y) u1 u2],

with (u1, u2) the chart basis, and the relative defect of that identity is
what `return_map` reports as ``symplectic_residual``.

DP itself is obtained from the flow monodromy M = Df^T(x) by correcting for
the variation of the return time: for a chart vector u,

    DP u = Pi( M u + X(Px) dT(u) ),   dT(u) = -(grad S . M u)/(grad S . X(Px)),

which lands exactly in the tangent plane of the section at Px (Pi merely
re-expresses it in chart coordinates).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .fields import Domain
from .flow import (
    DEFAULT_CONFIG,
    ImplicitSection,
    IntegratorConfig,
    PeriodicPlane,
    cross_section_event,
)
from .forms import volume_eval

__all__ = [
    "Section",
    "plane_section",
    "coordinate_plane_section",
    "ReturnMapResult",
    "return_map",
    "symplecticity_residual",
    "PeriodicOrbit",
    "find_periodic_orbit",
    "classify_multipliers",
    "SingularJacobian",
    "NewtonDiverged",
]

_ON_SECTION_TOL = 1e-10
_RESIDUAL_FLOOR = 1e-14


class SingularJacobian(Exception):
    """DP - I is numerically singular; the orbit family is degenerate."""


class NewtonDiverged(Exception):
    pass


@dataclass(frozen=True)
class Section:
    """A transversal surface with a 2-D chart.

    ``surface`` drives event location; ``to_chart``/``from_chart`` convert
    between ambient (lifted) points on the surface and chart coordinates;
    ``basis`` gives the (3, 2) chart tangent frame at a surface point.
    ``chart_periods`` marks chart axes that wrap (None entries do not).
    """

    surface: object
    to_chart: Callable[[np.ndarray], np.ndarray]
    from_chart: Callable[[np.ndarray], np.ndarray]
    basis: Callable[[np.ndarray], np.ndarray]
    chart_periods: tuple = (None, None)
    name: str = ""

    def on_section_defect(self, x) -> float:
        return abs(self.surface.value(np.asarray(x, dtype=float)))

    def chart_delta(self, a, b) -> np.ndarray:
        """chart(a) - chart(b), reduced to the nearest representative on
        periodic chart axes."""
        d = np.asarray(self.to_chart(a), float) - np.asarray(self.to_chart(b), float)
        for i, per in enumerate(self.chart_periods):
            if per is not None:
                d[i] -= per * round(d[i] / per)
        return d


def plane_section(normal, point, name: str = "") -> Section:
    """Affine plane normal . (x - point) = 0 with a fixed orthonormal chart."""
    n = np.asarray(normal, dtype=float)
    nn = np.linalg.norm(n)
    if nn == 0.0:
        raise ValueError("normal must be nonzero")
    n = n / nn
    p0 = np.asarray(point, dtype=float).copy()
    # complete n to an orthonormal frame
    Q, _ = np.linalg.qr(np.column_stack([n, np.eye(3)[:, np.argsort(np.abs(n))[:2]]]))
    u1, u2 = Q[:, 1].copy(), Q[:, 2].copy()
    U = np.column_stack([u1, u2])

    surface = ImplicitSection(
        fn=lambda x, n=n, p0=p0: float(np.dot(n, np.asarray(x, float) - p0)),
        grad=lambda x, n=n: n.copy(),
    )
    return Section(
        surface=surface,
        to_chart=lambda x: U.T @ (np.asarray(x, float) - p0),
        from_chart=lambda q: p0 + U @ np.asarray(q, float),
        basis=lambda x: U.copy(),
        chart_periods=(None, None),
        name=name or f"plane(n={np.round(n, 6)})",
    )


def coordinate_plane_section(axis: int, value: float, domain: Domain,
                             name: str = "") -> Section:
    """The coordinate surface x[axis] = value with the two remaining
    coordinates as chart.  On a torus domain the surface is the whole family
    of lifted planes, so windings count as crossings and the chart axes wrap.
    """
    if axis not in (0, 1, 2):
        raise ValueError("axis must be 0, 1 or 2")
    i, j = [k for k in range(3) if k != axis]
    U = np.zeros((3, 2))
    U[i, 0] = 1.0
    U[j, 1] = 1.0

    if domain.kind == "torus":
        per = domain.periods
        surface = PeriodicPlane(axis=axis, offset=float(value), period=float(per[axis]))
        chart_periods = (float(per[i]), float(per[j]))
    else:
        e = np.zeros(3)
        e[axis] = 1.0
        surface = ImplicitSection(
            fn=lambda x: float(x[axis]) - float(value),
            grad=lambda x, e=e: e.copy(),
        )
        chart_periods = (None, None)

    def from_chart(q, axis=axis, i=i, j=j, value=value):
        x = np.empty(3)
        x[axis] = value
        x[i], x[j] = float(q[0]), float(q[1])
        return x

    return Section(
        surface=surface,
        to_chart=lambda x, i=i, j=j: np.array([float(x[i]), float(x[j])]),
        from_chart=from_chart,
        basis=lambda x, U=U: U.copy(),
        chart_periods=chart_periods,
        name=name or f"x[{axis}]={value}",
    )


@dataclass
class ReturnMapResult:
    x: np.ndarray
    px: np.ndarray
    t: float
    monodromy: np.ndarray
    dp: np.ndarray
    w_start: float
    w_return: float
    symplectic_residual: float
    transversality: float
    accepted_steps: int


def _chart_coords(basis: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Coordinates of an in-plane vector v in the (3, 2) chart basis."""
    return np.linalg.solve(basis.T @ basis, basis.T @ v)


def section_area_density(field, volume, section: Section, x) -> float:
    """w(x) = rho det[X u1 u2]: the invariant area density in the chart."""
    x = np.asarray(x, dtype=float)
    U = section.basis(x)
    return volume_eval(volume, x, field.eval(x), U[:, 0], U[:, 1])


def return_map(field, volume, section: Section, x, direction: Optional[int] = None,
               cfg: IntegratorConfig = DEFAULT_CONFIG, t_max: float = 1e3,
               prefer=None) -> ReturnMapResult:
    """First return to the section, with the projected tangent map.

    ``direction=None`` keeps the orientation the orbit leaves with, so the
    result is the genuine (orientation-preserving) first return.
    """
    x = np.asarray(x, dtype=float)
    defect = section.on_section_defect(x)
    if defect > _ON_SECTION_TOL:
        raise ValueError(
            f"start point is off the section (|S| = {defect:.3e} > {_ON_SECTION_TOL})"
        )
    Xx = field.eval(x)
    g0 = section.surface.gradient(x)
    if direction is None:
        d0 = float(np.dot(g0, Xx))
        direction = int(math.copysign(1.0, d0)) if d0 != 0.0 else 0

    ev = cross_section_event(field, x, section.surface, direction=direction,
                             cfg=cfg, t_max=t_max, with_monodromy=True, prefer=prefer)
    px, M = ev.x, ev.monodromy
    Xp = field.eval(px)
    gp = section.surface.gradient(px)
    denom = float(np.dot(gp, Xp))

    U = section.basis(x)
    V = section.basis(px)
    dp = np.empty((2, 2))
    for k in range(2):
        Mu = M @ U[:, k]
        dtau = -float(np.dot(gp, Mu)) / denom
        v = Mu + dtau * Xp
        dp[:, k] = _chart_coords(V, v)

    w0 = volume_eval(volume, x, Xx, U[:, 0], U[:, 1])
    w1 = volume_eval(volume, px, Xp, V[:, 0], V[:, 1])
    resid = abs(float(np.linalg.det(dp)) * w1 - w0) / max(abs(w0), _RESIDUAL_FLOOR)

    return ReturnMapResult(
        x=x.copy(), px=px.copy(), t=ev.t, monodromy=M, dp=dp,
        w_start=w0, w_return=w1, symplectic_residual=resid,
        transversality=ev.transversality, accepted_steps=ev.accepted_steps,
    )


def symplecticity_residual(field, volume, section: Section, x,
                           cfg: IntegratorConfig = DEFAULT_CONFIG,
                           t_max: float = 1e3, prefer=None) -> float:
    """Relative defect of det(DP) w(Px) = w(x) for the first return from x."""
    return return_map(field, volume, section, x, cfg=cfg, t_max=t_max,
                      prefer=prefer).symplectic_residual


def classify_multipliers(mult, parabolic_tol: float = 1e-6) -> str:
    """Classify a symplectic 2x2 multiplier pair.

    parabolic: both multipliers within parabolic_tol of +1 (or both of -1);
    elliptic: complex pair; saddle_orientable / saddle_nonorientable: real
    pair with positive / negative multipliers.
    """
    mult = np.atleast_1d(np.asarray(mult, dtype=complex)).ravel()
    if mult.shape == (2, 2) or mult.size == 4:
        mult = np.linalg.eigvals(np.asarray(mult).reshape(2, 2))
    if mult.size != 2:
        raise ValueError("expected two multipliers or a 2x2 matrix")
    if all(abs(m - 1.0) < parabolic_tol for m in mult):
        return "parabolic"
    if all(abs(m + 1.0) < parabolic_tol for m in mult):
        return "parabolic"
    if any(abs(m.imag) > 1e-10 * max(1.0, abs(m)) for m in mult):
        return "elliptic"
    if all(m.real > 0.0 for m in mult):
        return "saddle_orientable"
    if all(m.real < 0.0 for m in mult):
        return "saddle_nonorientable"
    # mixed signs cannot occur for det = +1; report the honest failure
    raise ValueError(f"multiplier pair {mult} has indefinite orientation")


@dataclass
class PeriodicOrbit:
    x: np.ndarray
    period: float
    dp: np.ndarray
    multipliers: np.ndarray
    classification: str
    chart_residual: float
    iterations: int
    history: list = dc_field(default_factory=list)


def find_periodic_orbit(field, volume, section: Section, x0,
                        cfg: IntegratorConfig = DEFAULT_CONFIG,
                        tol: float = 1e-11, max_iter: int = 50,
                        t_max: float = 1e3, prefer=None) -> PeriodicOrbit:
    """Newton refinement of a section fixed point (a closed orbit of the flow).

    Iterates q -> q - (DP - I)^{-1} (P(q) - q) in chart coordinates.  Raises
    SingularJacobian when DP - I cannot be inverted (a degenerate/parabolic
    family, e.g. any integrable shear) and NewtonDiverged when the residual
    fails to reach ``tol`` within ``max_iter`` corrections.
    """
    q = np.asarray(section.to_chart(np.asarray(x0, dtype=float)), dtype=float)
    history = []
    r0 = None
    for it in range(max_iter + 1):
        x = section.from_chart(q)
        rm = return_map(field, volume, section, x, cfg=cfg, t_max=t_max, prefer=prefer)
        r = section.chart_delta(rm.px, x)
        rnorm = float(np.max(np.abs(r)))
        history.append(rnorm)
        if r0 is None:
            r0 = rnorm
        if rnorm < tol:
            mult = np.linalg.eigvals(rm.dp)
            return PeriodicOrbit(
                x=x, period=rm.t, dp=rm.dp, multipliers=mult,
                classification=classify_multipliers(mult),
                chart_residual=rnorm, iterations=it, history=history,
            )
        if not math.isfinite(rnorm) or rnorm > 1e6 * max(r0, 1.0):
            raise NewtonDiverged(
                f"residual {rnorm:.3e} after {it} iterations (started at {r0:.3e})"
            )
        J = rm.dp - np.eye(2)
        det = float(np.linalg.det(J))
        if abs(det) < 1e-12 * max(1.0, float(np.abs(J).max()) ** 2):
            raise SingularJacobian(
                f"det(DP - I) = {det:.3e}; the return map has no isolated fixed point here"
            )
        q = q - np.linalg.solve(J, r)
    raise NewtonDiverged(
        f"no convergence to {tol:.1e} within {max_iter} iterations "
        f"(last residual {history[-1]:.3e})"
    )
