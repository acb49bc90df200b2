"""Trajectory integration: flows, monodromy matrices, and section crossings.

The monodromy (tangent-flow) matrix is integrated *synchronously* with the
state as one augmented 12-dim system -- never reconstructed by differencing
nearby trajectories.  Section crossings are bracketed per accepted step with
cubic Hermite dense output, then refined by a Newton iteration on S(x(t))
whose trajectory evaluations re-integrate from the step start, so the
reported crossing sits on the numerical trajectory to integrator accuracy;
a bisection fallback kicks in after 25 Newton steps.

Torus fields are integrated on lifted coordinates.  Coordinate sections on a
torus are handled as the lifted coordinate crossing an integer lattice (see
`PeriodicPlane`): every wrap crossing then has a consistent orientation given
by the sign of dx_i/dt, which a single-valued periodic section function could
not provide.
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import backend

__all__ = [
    "FlowError",
    "StepLimitExceeded",
    "StepUnderflow",
    "NoCrossing",
    "TangentialCrossing",
    "IntegratorConfig",
    "DEFAULT_CONFIG",
    "FlowResult",
    "EventResult",
    "ImplicitSection",
    "PeriodicPlane",
    "advance",
    "advance_system",
    "flow_identity_residual",
    "cross_section_event",
]


class FlowError(Exception):
    """Base class for integration failures."""


class StepLimitExceeded(FlowError):
    pass


class StepUnderflow(FlowError):
    pass


class NoCrossing(FlowError):
    pass


class TangentialCrossing(FlowError):
    pass


_METHODS = ("rk45_adaptive", "rk4_fixed")


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk45_adaptive"
    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    max_step: float = math.inf
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {_METHODS}")
        if not (self.abs_tol > 0.0 and self.rel_tol > 0.0):
            raise ValueError("tolerances must be positive")
        if not self.max_step > 0.0:
            raise ValueError("max_step must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


DEFAULT_CONFIG = IntegratorConfig()


@dataclass
class FlowResult:
    """Endpoint of a flow segment.  ``x`` is the lifted endpoint (callers wrap
    for reporting); ``monodromy`` is Df^t(x0), or None if not requested."""

    x: np.ndarray
    monodromy: Optional[np.ndarray]
    t: float
    accepted_steps: int
    tol: float


@dataclass
class EventResult:
    """A located section crossing on the numerical trajectory."""

    t: float
    x: np.ndarray
    monodromy: Optional[np.ndarray]
    accepted_steps: int
    transversality: float  # |grad S . X| / (|grad S| |X|) at the crossing


# One accepted step: endpoint states and slopes for Hermite dense output.
StepRecord = namedtuple("StepRecord", "t0 h y0 f0 y1 f1")

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


def _rms(v):
    return float(np.sqrt(np.mean(v * v)))


def _initial_step(stepper, y0, f0, direction, span, cfg):
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y0)
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, span, cfg.max_step)
    y1 = y0 + (h0 * direction) * f0
    f1 = stepper.rhs_eval(h0 * direction, y1)
    d2 = _rms((f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, span, cfg.max_step)


def _run_adaptive(stepper, y0, t_final, cfg, on_step=None):
    """Integrate from t=0 to t_final (signed).  After each accepted step the
    optional ``on_step(record)`` callback may return a non-None payload to
    stop early.  Returns (t, y, f, accepted, payload_or_None)."""
    y = np.array(y0, dtype=float)
    f = stepper.rhs_eval(0.0, y)
    if t_final == 0.0:
        return 0.0, y, f, 0, None
    d = 1.0 if t_final > 0 else -1.0
    span = abs(t_final)
    h = _initial_step(stepper, y, f, d, span, cfg)
    t = 0.0
    accepted = 0
    attempts = 0
    while d * (t_final - t) > 0.0:
        if accepted >= cfg.max_steps or attempts >= 2 * cfg.max_steps + 100:
            raise StepLimitExceeded(
                f"no completion within {cfg.max_steps} steps (t={t:.6g} of {t_final:.6g})"
            )
        remaining = abs(t_final - t)
        h = min(h, remaining, cfg.max_step)
        if h < 1e-14 * max(1.0, abs(t)):
            raise StepUnderflow(f"step size underflow at t={t:.6g}")
        last = h >= remaining
        attempts += 1
        y_new, f_new, err = stepper.step(t, y, d * h, f)
        if not math.isfinite(err):
            h *= 0.25
            continue
        if err <= 1.0:
            rec = StepRecord(t, d * h, y, f, y_new, f_new)
            t = t_final if last else t + d * h
            y, f = y_new, f_new
            accepted += 1
            if on_step is not None:
                payload = on_step(rec)
                if payload is not None:
                    return t, y, f, accepted, payload
            factor = (
                _MAX_FACTOR
                if err == 0.0
                else min(_MAX_FACTOR, max(_MIN_FACTOR, _SAFETY * err ** -0.2))
            )
        else:
            factor = max(_MIN_FACTOR, _SAFETY * err ** -0.2)
        h *= factor
    return t, y, f, accepted, None


def _run_rk4(stepper, y0, t_final, cfg, on_step=None):
    """Fixed-step classic RK4 with step size cfg.max_step (the final step is
    shortened to land on t_final exactly)."""
    if not math.isfinite(cfg.max_step):
        raise ValueError("rk4_fixed requires a finite max_step")
    y = np.array(y0, dtype=float)
    f = stepper.rhs_eval(0.0, y)
    if t_final == 0.0:
        return 0.0, y, f, 0, None
    n = max(1, math.ceil(abs(t_final) / cfg.max_step))
    if n > cfg.max_steps:
        raise StepLimitExceeded(f"{n} fixed steps exceed max_steps={cfg.max_steps}")
    h = t_final / n
    rhs = stepper.rhs_eval
    t = 0.0
    for i in range(n):
        k1 = f
        k2 = rhs(t + 0.5 * h, y + (0.5 * h) * k1)
        k3 = rhs(t + 0.5 * h, y + (0.5 * h) * k2)
        k4 = rhs(t + h, y + h * k3)
        y_new = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t_new = t_final if i == n - 1 else t + h
        f_new = rhs(t_new, y_new)
        rec = StepRecord(t, h, y, f, y_new, f_new)
        t, y, f = t_new, y_new, f_new
        if on_step is not None:
            payload = on_step(rec)
            if payload is not None:
                return t, y, f, i + 1, payload
    return t, y, f, n, None


def _run(system, y0, t_final, cfg, on_step=None):
    stepper = system.stepper(cfg.abs_tol, cfg.rel_tol)
    if cfg.method == "rk4_fixed":
        return _run_rk4(stepper, y0, t_final, cfg, on_step)
    return _run_adaptive(stepper, y0, t_final, cfg, on_step)


# ----------------------------------------------------------------------------
# public flow operations


def advance(field, x0, t, cfg: IntegratorConfig = DEFAULT_CONFIG, with_monodromy=True,
            prefer=None) -> FlowResult:
    """Flow x0 for time t; the monodromy block rides along as 9 extra states."""
    x0 = np.asarray(x0, dtype=float)
    system = backend.field_system(field, with_monodromy, prefer=prefer)
    if with_monodromy:
        y0 = np.concatenate([x0, np.eye(3).ravel()])
    else:
        y0 = x0
    t_end, y, _, accepted, _ = _run(system, y0, float(t), cfg)
    M = y[3:].reshape(3, 3).copy() if with_monodromy else None
    return FlowResult(x=y[:3].copy(), monodromy=M, t=t_end, accepted_steps=accepted,
                      tol=min(cfg.abs_tol, cfg.rel_tol))


def advance_system(system, y0, t, cfg: IntegratorConfig = DEFAULT_CONFIG):
    """Advance an arbitrary backend system (torus charts, suspension charts).
    Returns (y_end, accepted_steps)."""
    t_end, y, _, accepted, _ = _run(system, np.asarray(y0, dtype=float), float(t), cfg)
    return y, accepted


def flow_identity_residual(field, x0, t, cfg: IntegratorConfig = DEFAULT_CONFIG,
                           prefer=None) -> float:
    """Sup-norm defect of Df^t(x0) X(x0) = X(f^t(x0)): the field is invariant
    under transport by its own tangent flow."""
    res = advance(field, x0, t, cfg, with_monodromy=True, prefer=prefer)
    lhs = res.monodromy @ field.eval(x0)
    rhs = field.eval(res.x)
    return float(np.max(np.abs(lhs - rhs)))


# ----------------------------------------------------------------------------
# section geometry for events


@dataclass(frozen=True)
class ImplicitSection:
    """Zero set of a smooth scalar S with analytic gradient."""

    fn: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]

    def value(self, x) -> float:
        return float(self.fn(x))

    def gradient(self, x) -> np.ndarray:
        return np.asarray(self.grad(x), dtype=float)


@dataclass(frozen=True)
class PeriodicPlane:
    """The family of lifted planes x[axis] = offset + k*period (k integer):
    one coordinate section of a torus, seen in lift coordinates."""

    axis: int
    offset: float
    period: float

    def __post_init__(self):
        if not (math.isfinite(self.period) and self.period > 0.0):
            raise ValueError("period must be finite and positive")

    def theta(self, x) -> float:
        return (float(x[self.axis]) - self.offset) / self.period

    def plane_value(self, x, k: int) -> float:
        return float(x[self.axis]) - self.offset - k * self.period

    def value(self, x) -> float:
        """Signed distance to the nearest plane of the family."""
        th = self.theta(x)
        return (th - round(th)) * self.period

    def gradient(self, x) -> np.ndarray:
        g = np.zeros(3)
        g[self.axis] = 1.0
        return g


def _hermite_pos(rec: StepRecord, tau: float) -> np.ndarray:
    """Cubic Hermite dense output for the position block at fraction tau."""
    t2 = tau * tau
    t3 = t2 * tau
    h00 = 2.0 * t3 - 3.0 * t2 + 1.0
    h10 = t3 - 2.0 * t2 + tau
    h01 = -2.0 * t3 + 3.0 * t2
    h11 = t3 - t2
    h = rec.h
    return (
        h00 * rec.y0[:3]
        + (h10 * h) * rec.f0[:3]
        + h01 * rec.y1[:3]
        + (h11 * h) * rec.f1[:3]
    )


def _node_pos(rec: StepRecord, tau: float) -> np.ndarray:
    if tau == 0.0:
        return rec.y0[:3]
    if tau == 1.0:
        return rec.y1[:3]
    return _hermite_pos(rec, tau)


_EVENT_NODES = (0.0, 0.25, 0.5, 0.75, 1.0)
_TANGENT_TOL = 1e-8
_ON_SECTION = 1e-12
_ARM_TOL = 1e-9  # |S| the orbit must reach before crossings are counted
_S_TARGET = 1e-13  # Newton aims below the contracted |S(x*)| < 1e-12


class _EventSearch:
    """Trajectory-accurate root refinement shared by both section kinds."""

    def __init__(self, system, cfg, direction):
        self.system = system
        self.cfg = cfg
        self.direction = int(direction)
        self.stepper = system.stepper(cfg.abs_tol, cfg.rel_tol)

    def _state_at(self, rec: StepRecord, dt: float):
        """State on the numerical trajectory dt after the step start."""
        if dt <= 0.0:
            return rec.y0, rec.f0
        if dt >= abs(rec.h):
            return rec.y1, rec.f1
        _, y, f, _, _ = _run_adaptive(self.stepper, rec.y0, dt, self.cfg)
        return y, f

    def refine(self, rec, ta, tb, ga, gb, gfn, gradfn, seed):
        """Safeguarded Newton (25 iterations, then bisection) for g(x(t)) = 0
        on the bracket [ta, tb] of offsets from the step start."""
        lo, hi, glo = ta, tb, ga
        dt = min(max(seed, lo), hi)
        best = None
        newton_done = False
        for _ in range(25):
            y, f = self._state_at(rec, dt)
            g = gfn(y[:3])
            gd = float(np.dot(gradfn(y[:3]), f[:3]))
            if best is None or abs(g) < abs(best[1]):
                best = (dt, g, y, f)
            if abs(g) < _S_TARGET:
                newton_done = True
                break
            if glo == 0.0 or g * glo > 0.0:
                lo, glo = dt, g
            else:
                hi = dt
            if gd == 0.0:
                dt = 0.5 * (lo + hi)
                continue
            dt_new = dt - g / gd
            if not math.isfinite(dt_new) or not (lo <= dt_new <= hi):
                dt_new = 0.5 * (lo + hi)
            if abs(dt_new - dt) < 1e-16 * max(1.0, abs(rec.t0 + dt)):
                newton_done = True
                break
            dt = dt_new
        if not newton_done:
            for _ in range(90):
                if hi - lo < 1e-15 * max(1.0, abs(rec.t0 + hi)):
                    break
                dt = 0.5 * (lo + hi)
                y, f = self._state_at(rec, dt)
                g = gfn(y[:3])
                if abs(g) < abs(best[1]):
                    best = (dt, g, y, f)
                if abs(g) < _S_TARGET:
                    break
                if glo == 0.0 or g * glo > 0.0:
                    lo, glo = dt, g
                else:
                    hi = dt

        dt, g, y, f = best
        x = y[:3]
        grad = gradfn(x)
        gd = float(np.dot(grad, f[:3]))
        nrm = float(np.linalg.norm(grad)) * float(np.linalg.norm(f[:3]))
        trans = abs(gd) / nrm if nrm > 0.0 else 0.0
        if trans < _TANGENT_TOL:
            raise TangentialCrossing(
                f"crossing at t={rec.t0 + dt:.6g} is tangential "
                f"(|grad S . X|/(|grad S||X|) = {trans:.3e})"
            )
        if self.direction != 0 and math.copysign(1.0, gd) != self.direction:
            return None  # wrong way through the section; keep searching
        return dt, y, trans


class _ImplicitScanner:
    """Sign-change scan of a scalar section function at Hermite nodes.  Arms
    only once the orbit has measurably left the section, so a start on the
    section is not reported as an immediate return."""

    def __init__(self, search: _EventSearch, section: ImplicitSection):
        self.search = search
        self.section = section
        self.armed = False

    def __call__(self, rec: StepRecord):
        sec = self.section
        vals = [(tau, sec.value(_node_pos(rec, tau))) for tau in _EVENT_NODES]
        start = 0
        if not self.armed:
            for i, (_, s) in enumerate(vals):
                if abs(s) > _ARM_TOL:
                    self.armed = True
                    start = i
                    break
            else:
                return None
        h = abs(rec.h)
        want = self.search.direction
        for (ta, sa), (tb, sb) in zip(vals[start:-1], vals[start + 1:]):
            if sa * sb > 0.0 or sa == sb or sa == 0.0:
                continue
            if want != 0 and math.copysign(1.0, sb - sa) != want:
                continue
            seed = (ta + (sa / (sa - sb)) * (tb - ta)) * h
            got = self.search.refine(
                rec, ta * h, tb * h, sa, sb,
                lambda xx: sec.value(xx), lambda xx: sec.gradient(xx), seed,
            )
            if got is not None:
                dt, y, trans = got
                return (rec.t0 + dt, y, trans)
        return None


class _LatticeScanner:
    """Scan for the lifted coordinate crossing integer lattice planes."""

    _SNAP = 1e-9  # lift distance below which the start counts as on-plane

    def __init__(self, search: _EventSearch, plane: PeriodicPlane):
        self.search = search
        self.plane = plane
        self.first = True

    def __call__(self, rec: StepRecord):
        plane = self.plane
        nodes = [(tau, plane.theta(_node_pos(rec, tau))) for tau in _EVENT_NODES]
        if self.first:
            tau0, th0 = nodes[0]
            r = round(th0)
            if abs(th0 - r) * plane.period <= self._SNAP:
                nodes[0] = (tau0, float(r))
            self.first = False
        h = abs(rec.h)
        want = self.search.direction
        gradfn = plane.gradient
        for (ta, tha), (tb, thb) in zip(nodes[:-1], nodes[1:]):
            if thb == tha:
                continue
            ascending = thb > tha
            if ascending:
                ks = range(math.floor(tha) + 1, math.floor(thb) + 1)
            else:
                ks = range(math.ceil(tha) - 1, math.ceil(thb) - 2, -1)
            for k in ks:
                if want != 0 and (1 if ascending else -1) != want:
                    continue
                ga = (tha - k) * plane.period
                gb = (thb - k) * plane.period
                seed = (ta + ((k - tha) / (thb - tha)) * (tb - ta)) * h
                got = self.search.refine(
                    rec, ta * h, tb * h, ga, gb,
                    lambda xx, kk=k: plane.plane_value(xx, kk), gradfn, seed,
                )
                if got is not None:
                    dt, y, trans = got
                    return (rec.t0 + dt, y, trans)
        return None


def cross_section_event(field, x0, section, direction=0,
                        cfg: IntegratorConfig = DEFAULT_CONFIG, t_max=1e3,
                        with_monodromy=True, prefer=None) -> EventResult:
    """First transversal crossing of the section after leaving x0.

    ``direction`` filters on the sign of grad S . X at the crossing (+1, -1,
    or 0 for either).  Raises NoCrossing when the time budget ``t_max`` runs
    out and TangentialCrossing when the orbit meets the section tangentially
    (|grad S . X| / (|grad S| |X|) < 1e-8).
    """
    x0 = np.asarray(x0, dtype=float)
    if t_max <= 0.0:
        raise ValueError("t_max must be positive")
    system = backend.field_system(field, with_monodromy, prefer=prefer)
    y0 = np.concatenate([x0, np.eye(3).ravel()]) if with_monodromy else x0.copy()

    # starting on the section: demand transversality up front
    f0x = field.eval(x0)
    grad0 = section.gradient(x0)
    nrm = float(np.linalg.norm(grad0)) * float(np.linalg.norm(f0x))
    if abs(section.value(x0)) <= 10.0 * _ON_SECTION:
        trans0 = abs(float(np.dot(grad0, f0x))) / nrm if nrm > 0.0 else 0.0
        if trans0 < _TANGENT_TOL:
            raise TangentialCrossing(
                f"orbit starts on the section with tangential velocity (ratio {trans0:.3e})"
            )

    search = _EventSearch(system, cfg, direction)
    if isinstance(section, PeriodicPlane):
        scanner = _LatticeScanner(search, section)
    else:
        scanner = _ImplicitScanner(search, section)

    _, _, _, accepted, payload = _run(system, y0, t_max, cfg, on_step=scanner)
    if payload is None:
        raise NoCrossing(
            f"no {'directed ' if direction else ''}section crossing within t={t_max:.6g}"
        )
    t_star, y_star, trans = payload
    M = y_star[3:].reshape(3, 3).copy() if with_monodromy else None
    return EventResult(t=t_star, x=y_star[:3].copy(), monodromy=M,
                       accepted_steps=accepted, transversality=trans)
