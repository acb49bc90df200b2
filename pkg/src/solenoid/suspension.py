"""Suspension of an area-preserving surface map into a Hamiltonian model.

Given a map P of the plane / 2-torus preserving the area form w dx1^dx2, the
mapping torus carries the flow "climb the roof, then glue by P":

    points   (x1, x2, r, s),   gluing  g(x, r, s) = (P(x), r - 1, s),
    flow     Xt = (0, 0, 1/tau, 0)          (tau = constant roof height),
    2-form   Lambda = w(x) dx1^dx2 + (1/eps) dr^ds.

Lambda is closed, nondegenerate (det = (w/eps)^2), invariant under the
gluing, and contracts with the flow to the exact differential of

    H = s / (eps tau),

so the suspension flow is Hamiltonian; the auxiliary pair (r, s) costs one
scale eps.  `certify` re-derives each of those claims numerically instead of
trusting the formulas, and `restrict_to_level` exposes the flow on an H-level
whose section return map must coincide with P itself -- the round trip that
ties the Hamiltonian model back to the original map.

Only constant roofs are supported: a position-dependent roof makes
i_X Lambda non-closed, and certification would (correctly) fail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .fields import constant_field
from .flow import DEFAULT_CONFIG, IntegratorConfig, PeriodicPlane, cross_section_event
from .poincare import NewtonDiverged, SingularJacobian, classify_multipliers

__all__ = [
    "SurfaceMap",
    "standard_map",
    "identity_map",
    "ZeroEpsilon",
    "NonSymplecticBase",
    "OpenPath",
    "SuspensionModel",
    "build",
    "LevelFlow",
    "HamiltonianCertificate",
]


class ZeroEpsilon(ValueError):
    """The auxiliary symplectic scale must be positive."""


class NonSymplecticBase(Exception):
    """The base map does not preserve the declared area form."""


class OpenPath(Exception):
    """A period integral was requested over a path that is not a loop."""


@dataclass(frozen=True)
class SurfaceMap:
    """An explicit surface map with Jacobian, acting on lifted coordinates.

    ``periods`` marks torus maps; ``density_fn`` is the preserved area weight
    (defaults to 1, the Lebesgue case).
    """

    name: str
    apply_fn: Callable[[np.ndarray], np.ndarray]
    jac_fn: Callable[[np.ndarray], np.ndarray]
    periods: Optional[tuple] = None
    density_fn: Optional[Callable[[np.ndarray], float]] = None

    def apply(self, q) -> np.ndarray:
        return np.asarray(self.apply_fn(np.asarray(q, dtype=float)), dtype=float)

    def jacobian(self, q) -> np.ndarray:
        return np.asarray(self.jac_fn(np.asarray(q, dtype=float)), dtype=float)

    def density(self, q) -> float:
        if self.density_fn is None:
            return 1.0
        return float(self.density_fn(np.asarray(q, dtype=float)))

    def wrap(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.periods is None:
            return q.copy()
        per = np.asarray(self.periods, dtype=float)
        return np.mod(q, per)

    def delta(self, a, b) -> np.ndarray:
        """a - b reduced to the nearest representative on torus maps."""
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        if self.periods is not None:
            per = np.asarray(self.periods, dtype=float)
            d -= per * np.round(d / per)
        return d


def standard_map(K: float) -> SurfaceMap:
    """Kicked-rotor map of the 2-torus: p' = p - K sin x, x' = x + p'."""

    def apply_fn(q):
        p_new = q[1] - K * math.sin(q[0])
        return np.array([q[0] + p_new, p_new])

    def jac_fn(q):
        c = K * math.cos(q[0])
        return np.array([[1.0 - c, 1.0], [-c, 1.0]])

    return SurfaceMap(
        name=f"standard_map(K={K})",
        apply_fn=apply_fn,
        jac_fn=jac_fn,
        periods=(2.0 * math.pi, 2.0 * math.pi),
    )


def identity_map(periods=(2.0 * math.pi, 2.0 * math.pi)) -> SurfaceMap:
    return SurfaceMap(
        name="identity",
        apply_fn=lambda q: q.copy(),
        jac_fn=lambda q: np.eye(2),
        periods=periods,
    )


def build(base: SurfaceMap, epsilon: float, roof: float = 1.0,
          check_points: int = 32, seed: int = 0) -> "SuspensionModel":
    """Assemble the suspension model, refusing degenerate ingredients.

    Area preservation of the base map is sampled (det DP(x) w(Px) = w(x)); a
    defect above 1e-10 raises NonSymplecticBase since Lambda would then fail
    to descend to the mapping torus.
    """
    if not epsilon > 0.0:
        raise ZeroEpsilon(f"epsilon must be positive, got {epsilon}")
    if not roof > 0.0:
        raise ValueError(f"roof height must be positive, got {roof}")
    rng = np.random.default_rng(seed)
    span = base.periods if base.periods is not None else (2.0, 2.0)
    worst = 0.0
    worst_at = None
    for _ in range(check_points):
        q = rng.uniform(0.0, span, size=2).astype(float)
        det = float(np.linalg.det(base.jacobian(q)))
        defect = abs(det * base.density(base.apply(q)) - base.density(q))
        if defect > worst:
            worst, worst_at = defect, q
    if worst > 1e-10:
        raise NonSymplecticBase(
            f"base map {base.name} distorts the area form by {worst:.3e} "
            f"near {np.round(worst_at, 4)}"
        )
    return SuspensionModel(base=base, epsilon=float(epsilon), roof=float(roof))


@dataclass(frozen=True)
class SuspensionModel:
    """The suspended Hamiltonian system in cover coordinates (x1, x2, r, s)."""

    base: SurfaceMap
    epsilon: float
    roof: float

    # -- pointwise structures ------------------------------------------------

    def Lambda(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        w = self.base.density(p[:2])
        inv_eps = 1.0 / self.epsilon
        W = np.zeros((4, 4))
        W[0, 1], W[1, 0] = w, -w
        W[2, 3], W[3, 2] = inv_eps, -inv_eps
        return W

    def Xtilde(self, p) -> np.ndarray:
        return np.array([0.0, 0.0, 1.0 / self.roof, 0.0])

    def i_X_Lambda(self, p) -> np.ndarray:
        """The covector Lambda(Xt, .) -- computed from the matrix, not from
        the closed-form answer, so certification has something to compare."""
        return self.Xtilde(p) @ self.Lambda(p)

    def hamiltonian(self, p) -> float:
        return float(p[3]) / (self.epsilon * self.roof)

    # -- gluing --------------------------------------------------------------

    def glue(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        x_next = self.base.apply(p[:2])
        return np.array([x_next[0], x_next[1], p[2] - 1.0, p[3]])

    def dglue(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        D = np.eye(4)
        D[:2, :2] = self.base.jacobian(p[:2])
        return D

    # -- path integrals of i_X Lambda ----------------------------------------

    def line_integral(self, vertices) -> float:
        """Integral of i_X Lambda along a polyline, one scipy quad per leg."""
        V = np.asarray(vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] != 4 or len(V) < 2:
            raise ValueError("vertices must be an (m, 4) array with m >= 2")
        total = 0.0
        for a, b in zip(V[:-1], V[1:]):
            d = b - a

            def leg(u, a=a, d=d):
                return float(np.dot(self.i_X_Lambda(a + u * d), d))

            val, _ = quad(leg, 0.0, 1.0, limit=80)
            total += val
        return total

    def _same_point(self, a, b) -> bool:
        dx = self.base.delta(a[:2], b[:2])
        return bool(
            np.max(np.abs(dx)) < 1e-9 and abs(a[2] - b[2]) < 1e-9
            and abs(a[3] - b[3]) < 1e-9
        )

    def period_integral(self, vertices) -> float:
        """Loop integral of i_X Lambda; the path must close up in the
        mapping torus (exactly, or after one gluing at either end)."""
        V = np.asarray(vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] != 4 or len(V) < 2:
            raise ValueError("vertices must be an (m, 4) array with m >= 2")
        start, end = V[0], V[-1]
        closed = (
            self._same_point(start, end)
            or self._same_point(start, self.glue(end))
            or self._same_point(self.glue(start), end)
        )
        if not closed:
            raise OpenPath(
                f"endpoints {np.round(start, 6)} and {np.round(end, 6)} do not "
                "meet, even through the gluing"
            )
        return self.line_integral(V)

    def hamiltonian_by_path(self, p, p0=None) -> float:
        """H(p) - H(p0) reconstructed by quadrature along a straight path."""
        p = np.asarray(p, dtype=float)
        if p0 is None:
            p0 = np.zeros(4)
        return self.line_integral(np.vstack([np.asarray(p0, float), p]))

    # -- canonical loops generating the first homology -----------------------

    def generating_loops(self, at=None) -> list:
        """Three loops generating H1 of the mapping torus: the two base
        angles and the loop that closes through the gluing."""
        if self.base.periods is None:
            raise ValueError("generating loops need a torus base map")
        p = np.array([0.3, 1.1, 0.2, 0.4]) if at is None else np.asarray(at, float)
        per = self.base.periods
        loops = []
        for axis, tag in ((0, "x-loop"), (1, "psi-loop")):
            shift = np.zeros(4)
            shift[axis] = per[axis]
            loops.append((tag, np.vstack([p, p + shift])))
        x0 = p[:2]
        s0 = p[3]
        start = np.array([*self.base.apply(x0), 0.0, s0])
        end = np.array([x0[0], x0[1], 1.0, s0])
        mid = 0.5 * (start + end) + np.array([0.0, 0.0, 0.0, 0.0])
        loops.append(("gluing-loop", np.vstack([start, mid, end])))
        return loops

    # -- dynamics on one energy level ----------------------------------------

    def restrict_to_level(self, level: float = 0.0) -> "LevelFlow":
        return LevelFlow(model=self, level=float(level))

    def certify(self, n_points: int = 40, seed: int = 1,
                cfg: IntegratorConfig = DEFAULT_CONFIG,
                return_points: int = 100, tol_scale: float = 1.0,
                prefer=None) -> "HamiltonianCertificate":
        return _certify(self, n_points, seed, cfg, return_points, tol_scale, prefer)


@dataclass
class SuspensionOrbit:
    q: np.ndarray
    period: float
    dp: np.ndarray
    multipliers: np.ndarray
    classification: str
    residual: float
    iterations: int


@dataclass(frozen=True)
class LevelFlow:
    """The suspension flow restricted to a level H = const.

    Coordinates (x1, x2, r) in the cover; the flow climbs r at rate 1/tau and
    the section {r = 0} is hit once per unit of r, after which the gluing
    applies the base map.  The return map therefore *is* the base map -- but
    this class computes it the long way, through the event machinery, so the
    identification can be tested rather than assumed.
    """

    model: SuspensionModel
    level: float

    @property
    def s_value(self) -> float:
        return self.level * self.model.epsilon * self.model.roof

    def _cover_field(self):
        return constant_field(
            np.array([0.0, 0.0, 1.0 / self.model.roof]), name="suspension_cover"
        )

    def return_map(self, q, cfg: IntegratorConfig = DEFAULT_CONFIG, prefer=None):
        """One full pass over the roof and through the gluing.

        Returns (next_q, dp, time): the section image in base coordinates,
        its derivative, and the elapsed flow time.
        """
        q = np.asarray(q, dtype=float)
        x0 = np.array([q[0], q[1], 0.0])
        plane = PeriodicPlane(axis=2, offset=0.0, period=1.0)
        ev = cross_section_event(self._cover_field(), x0, plane, direction=+1,
                                 cfg=cfg, t_max=10.0 * self.model.roof,
                                 with_monodromy=True, prefer=prefer)
        # project the monodromy onto the section plane (the r-column drops)
        M = ev.monodromy
        grad = plane.gradient(ev.x)
        xdot = self._cover_field().eval(ev.x)
        denom = float(np.dot(grad, xdot))
        cols = []
        for k in range(2):
            u = np.zeros(3)
            u[k] = 1.0
            Mu = M @ u
            dtau = -float(np.dot(grad, Mu)) / denom
            v = Mu + dtau * xdot
            cols.append(v[:2])
        M2 = np.column_stack(cols)
        glued = self.model.glue(np.array([ev.x[0], ev.x[1], ev.x[2], self.s_value]))
        dp = self.model.base.jacobian(ev.x[:2]) @ M2
        return glued[:2], dp, ev.t

    def periodic_orbit(self, q0, tol: float = 1e-11, max_iter: int = 50,
                       cfg: IntegratorConfig = DEFAULT_CONFIG,
                       prefer=None) -> SuspensionOrbit:
        """Newton refinement of a fixed point of the section return map."""
        q = np.asarray(q0, dtype=float).copy()
        r0 = None
        for it in range(max_iter + 1):
            pq, dp, t = self.return_map(q, cfg=cfg, prefer=prefer)
            r = self.model.base.delta(pq, q)
            rnorm = float(np.max(np.abs(r)))
            if r0 is None:
                r0 = rnorm
            if rnorm < tol:
                mult = np.linalg.eigvals(dp)
                return SuspensionOrbit(
                    q=self.model.base.wrap(q), period=t, dp=dp,
                    multipliers=mult,
                    classification=classify_multipliers(mult),
                    residual=rnorm, iterations=it,
                )
            if not math.isfinite(rnorm) or rnorm > 1e6 * max(r0, 1.0):
                raise NewtonDiverged(
                    f"residual {rnorm:.3e} after {it} iterations"
                )
            J = dp - np.eye(2)
            det = float(np.linalg.det(J))
            if abs(det) < 1e-12 * max(1.0, float(np.abs(J).max()) ** 2):
                raise SingularJacobian(
                    f"det(DP - I) = {det:.3e} at q = {np.round(q, 5)}"
                )
            q = q - np.linalg.solve(J, r)
        raise NewtonDiverged(f"no convergence within {max_iter} iterations")


# ----------------------------------------------------------------------------
# certification


@dataclass
class HamiltonianCertificate:
    """Numerical evidence that the suspension is Hamiltonian.

    Every item is a measured defect (smaller is better); ``thresholds`` holds
    the acceptance bound for each, ``failures`` the items that missed them.
    """

    base_name: str
    epsilon: float
    roof: float
    points_checked: int
    dh_defect: float
    loop_periods: dict
    det_min: float
    det_consistency: float
    hamilton_equation_defect: float
    s_drift: float
    gluing_lambda_defect: float
    gluing_field_defect: float
    gluing_h_defect: float
    return_vs_base: float
    h_path_spread: float
    thresholds: dict = dc_field(default_factory=dict)
    failures: list = dc_field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "base": self.base_name,
            "epsilon": self.epsilon,
            "roof": self.roof,
            "points_checked": self.points_checked,
            "items": {
                "dh_defect": self.dh_defect,
                "loop_periods": dict(self.loop_periods),
                "det_min": self.det_min,
                "det_consistency": self.det_consistency,
                "hamilton_equation_defect": self.hamilton_equation_defect,
                "s_drift": self.s_drift,
                "gluing_lambda_defect": self.gluing_lambda_defect,
                "gluing_field_defect": self.gluing_field_defect,
                "gluing_h_defect": self.gluing_h_defect,
                "return_vs_base": self.return_vs_base,
                "h_path_spread": self.h_path_spread,
            },
            "thresholds": dict(self.thresholds),
            "failures": list(self.failures),
            "passed": self.passed,
        }


_BASE_THRESHOLDS = {
    "dh_defect": 1e-8,
    "loop_periods": 1e-10,
    "det_positivity": 1e-12,
    "det_consistency": 1e-10,
    "hamilton_equation_defect": 1e-10,
    "s_drift": 1e-12,
    "gluing_lambda_defect": 1e-10,
    "gluing_field_defect": 1e-10,
    "gluing_h_defect": 1e-10,
    "return_vs_base": 1e-10,
    "h_path_spread": 1e-10,
}


def _fd_gradient(fn, p, h: float = 1e-4) -> np.ndarray:
    g = np.empty(4)
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        g[j] = (fn(p + e) - fn(p - e)) / (2.0 * h)
    return g


def _certify(model: SuspensionModel, n_points, seed, cfg, return_points,
             tol_scale, prefer) -> HamiltonianCertificate:
    rng = np.random.default_rng(seed)
    per = model.base.periods if model.base.periods is not None else (2.0, 2.0)
    pts = np.column_stack([
        rng.uniform(0.0, per[0], n_points),
        rng.uniform(0.0, per[1], n_points),
        rng.uniform(-0.5, 1.5, n_points),
        rng.uniform(-1.0, 1.0, n_points),
    ])

    dh_defect = 0.0
    det_min = math.inf
    det_consistency = 0.0
    hameq = 0.0
    s_drift = 0.0
    glue_lam = 0.0
    glue_field = 0.0
    glue_h = 0.0
    for p in pts:
        alpha = model.i_X_Lambda(p)
        dh_defect = max(dh_defect, float(np.max(np.abs(
            _fd_gradient(model.hamiltonian, p) - alpha))))
        W = model.Lambda(p)
        det = float(np.linalg.det(W))
        det_min = min(det_min, abs(det))
        w = model.base.density(p[:2])
        det_consistency = max(det_consistency,
                              abs(det - (w / model.epsilon) ** 2))
        # Hamilton's equation: the vector recovered from Lambda v = -dH... the
        # contraction convention here solves W^T v = dH, i.e. v = Xt.
        v = np.linalg.solve(W.T, _fd_gradient(model.hamiltonian, p))
        hameq = max(hameq, float(np.max(np.abs(v - model.Xtilde(p)))))
        s_drift = max(s_drift, abs(float(model.Xtilde(p)[3])))
        # gluing invariance of the whole package
        gp = model.glue(p)
        D = model.dglue(p)
        glue_lam = max(glue_lam, float(np.max(np.abs(
            D.T @ model.Lambda(gp) @ D - W))))
        glue_field = max(glue_field, float(np.max(np.abs(
            D @ model.Xtilde(p) - model.Xtilde(gp)))))
        glue_h = max(glue_h, abs(model.hamiltonian(gp) - model.hamiltonian(p)))

    loop_periods = {}
    if model.base.periods is not None:
        for tag, loop in model.generating_loops():
            loop_periods[tag] = abs(model.period_integral(loop))

    # H reconstructed by quadrature must not depend on the (x, r) part
    s_probe = 0.7
    h_vals = []
    for _ in range(8):
        p = np.array([
            rng.uniform(0.0, per[0]), rng.uniform(0.0, per[1]),
            rng.uniform(-0.5, 1.5), s_probe,
        ])
        h_vals.append(model.hamiltonian_by_path(p))
    h_path_spread = float(np.max(h_vals) - np.min(h_vals))

    # the level return map against the base map, straight distance on the torus
    lf = model.restrict_to_level(0.0)
    ret_defect = 0.0
    for _ in range(return_points):
        q = rng.uniform(0.0, per, size=2)
        got, _, _ = lf.return_map(q, cfg=cfg, prefer=prefer)
        want = model.base.apply(q)
        ret_defect = max(ret_defect, float(np.max(np.abs(
            model.base.delta(got, want)))))

    thr = {k: v * tol_scale for k, v in _BASE_THRESHOLDS.items()}
    failures = []
    if dh_defect > thr["dh_defect"]:
        failures.append("dh_defect")
    if any(v > thr["loop_periods"] for v in loop_periods.values()):
        failures.append("loop_periods")
    if det_min < thr["det_positivity"]:
        failures.append("det_positivity")
    if det_consistency > thr["det_consistency"]:
        failures.append("det_consistency")
    if hameq > thr["hamilton_equation_defect"]:
        failures.append("hamilton_equation_defect")
    if s_drift > thr["s_drift"]:
        failures.append("s_drift")
    if glue_lam > thr["gluing_lambda_defect"]:
        failures.append("gluing_lambda_defect")
    if glue_field > thr["gluing_field_defect"]:
        failures.append("gluing_field_defect")
    if glue_h > thr["gluing_h_defect"]:
        failures.append("gluing_h_defect")
    if ret_defect > thr["return_vs_base"]:
        failures.append("return_vs_base")
    if h_path_spread > thr["h_path_spread"]:
        failures.append("h_path_spread")

    return HamiltonianCertificate(
        base_name=model.base.name, epsilon=model.epsilon, roof=model.roof,
        points_checked=int(n_points), dh_defect=dh_defect,
        loop_periods=loop_periods, det_min=det_min,
        det_consistency=det_consistency, hamilton_equation_defect=hameq,
        s_drift=s_drift, gluing_lambda_defect=glue_lam,
        gluing_field_defect=glue_field, gluing_h_defect=glue_h,
        return_vs_base=ret_defect, h_path_spread=h_path_spread,
        thresholds=thr, failures=failures,
    )
