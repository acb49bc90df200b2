"""Rotation numbers on invariant 2-tori.

Two estimators with complementary failure modes:

* `rotation_quadrature` averages the chart velocity against the invariant
  chart density a on a uniform periodic grid.  The rectangle rule is
  spectrally accurate there, so for analytic data the result saturates at
  round-off -- but it is only meaningful if a actually is invariant, which
  `measure_pde_residual` verifies first (d/dphi(aA) + d/dpsi(aB) = 0,
  checked with FFT derivatives).

* `rotation_birkhoff` follows one orbit and divides angular displacement by
  time.  No density needed, but the tail of the time average decays like
  O(1/T), so it serves as the independent slow cross-check.

The raw per-axis values carry the (arbitrary) normalization of a and of the
time parameterization; only the ratio lambda1/lambda2 is comparable across
estimators and across reparameterizations of the same torus.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import backend
from .flow import DEFAULT_CONFIG, IntegratorConfig, advance_system

__all__ = [
    "NoChartAvailable",
    "RotationEstimate",
    "TorusFlow",
    "torus_from_level",
    "measure_pde_residual",
    "rotation_quadrature",
    "rotation_birkhoff",
    "partial_quotients",
]


class NoChartAvailable(Exception):
    """The catalog entry does not expose level tori with charts."""


@dataclass
class RotationEstimate:
    """Per-axis angular rates and their ratio, from one estimator.

    ``degenerate`` marks a vanishing denominator rate (the ratio is then
    NaN, not a number to compare).  ``pde_residual`` is filled by the
    quadrature path, ``error_estimate`` (a half-horizon comparison) by the
    Birkhoff path.
    """

    lambda1: float
    lambda2: float
    ratio: float
    method: str
    degenerate: bool = False
    pde_residual: Optional[float] = None
    error_estimate: Optional[float] = None
    horizon: Optional[float] = None
    grid: Optional[int] = None


@dataclass
class TorusFlow:
    """A chart flow (phi', psi') = (A, B) on one invariant torus."""

    chart: object

    def velocity(self, q) -> np.ndarray:
        return np.array(
            [float(self.chart.A(q[0], q[1])), float(self.chart.B(q[0], q[1]))]
        )

    def advance(self, q0, t, cfg: IntegratorConfig = DEFAULT_CONFIG, prefer=None):
        """Lifted chart point after time t (no wrapping, windings kept)."""
        system = backend.torus_system(self.chart, prefer=prefer)
        y, _ = advance_system(system, np.asarray(q0, dtype=float), t, cfg)
        return y


def torus_from_level(entry, c: float) -> TorusFlow:
    """The chart flow on the invariant torus at level F = c of a catalog entry."""
    if entry.torus_chart is None:
        raise NoChartAvailable(
            f"catalog entry {entry.name!r} does not provide torus charts"
        )
    return TorusFlow(chart=entry.torus_chart(c))


def _grids(chart, n: int):
    phi = 2.0 * np.pi * np.arange(n) / n
    P, Q = np.meshgrid(phi, phi, indexing="ij")
    A = np.broadcast_to(np.asarray(chart.A(P, Q), dtype=float), P.shape)
    B = np.broadcast_to(np.asarray(chart.B(P, Q), dtype=float), P.shape)
    a = np.broadcast_to(np.asarray(chart.a(P, Q), dtype=float), P.shape)
    return a * A, a * B


def measure_pde_residual(chart, n: int = 64) -> float:
    """max |d/dphi(aA) + d/dpsi(aB)| on an n x n grid, FFT derivatives."""
    if n < 4:
        raise ValueError("grid too small for a spectral residual")
    aA, aB = _grids(chart, n)
    k = np.fft.fftfreq(n, d=1.0 / n)  # integer wavenumbers for period 2 pi
    ik = 1j * k
    d_phi = np.real(np.fft.ifft(ik[:, None] * np.fft.fft(aA, axis=0), axis=0))
    d_psi = np.real(np.fft.ifft(ik[None, :] * np.fft.fft(aB, axis=1), axis=1))
    return float(np.max(np.abs(d_phi + d_psi)))


def rotation_quadrature(chart, n: int = 64, residual_warn: float = 1e-8) -> RotationEstimate:
    """Rotation rates as grid means of a*A and a*B.

    Warns (and still reports) when the invariance PDE residual of the
    supplied density exceeds ``residual_warn``: the averages are then
    averages against a non-invariant weight and converge to nothing useful.
    """
    resid = measure_pde_residual(chart, n)
    if resid > residual_warn:
        warnings.warn(
            f"chart density is not invariant (PDE residual {resid:.3e}); "
            "quadrature rotation numbers are unreliable",
            stacklevel=2,
        )
    aA, aB = _grids(chart, n)
    lam1 = float(np.mean(aA))
    lam2 = float(np.mean(aB))
    degenerate = abs(lam2) < 1e-12 * max(1.0, abs(lam1))
    ratio = math.nan if degenerate else lam1 / lam2
    return RotationEstimate(
        lambda1=lam1, lambda2=lam2, ratio=ratio, method="quadrature",
        degenerate=degenerate, pde_residual=resid, grid=n,
    )


def rotation_birkhoff(chart, start=(0.37, 0.81), horizon: float = 256.0,
                      cfg: IntegratorConfig = DEFAULT_CONFIG,
                      prefer=None) -> RotationEstimate:
    """Time-averaged angular rates along one orbit, error estimated by
    comparing against the half-horizon average."""
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    q0 = np.asarray(start, dtype=float)
    flow = TorusFlow(chart)
    q_half = flow.advance(q0, horizon / 2.0, cfg=cfg, prefer=prefer)
    q_full = flow.advance(q_half, horizon / 2.0, cfg=cfg, prefer=prefer)
    lam1 = (q_full[0] - q0[0]) / horizon
    lam2 = (q_full[1] - q0[1]) / horizon
    degenerate = abs(lam2) < 1e-12 * max(1.0, abs(lam1))
    if degenerate:
        ratio = math.nan
        err = math.nan
    else:
        ratio = lam1 / lam2
        h1 = (q_half[0] - q0[0]) / (horizon / 2.0)
        h2 = (q_half[1] - q0[1]) / (horizon / 2.0)
        err = math.inf if h2 == 0.0 else abs(ratio - h1 / h2)
    return RotationEstimate(
        lambda1=float(lam1), lambda2=float(lam2), ratio=float(ratio),
        method="birkhoff", degenerate=degenerate, error_estimate=float(err),
        horizon=float(horizon),
    )


def partial_quotients(value: float, depth: int = 20) -> list:
    """Continued-fraction expansion [a0; a1, a2, ...] of a real number.

    Stops early when the remainder drops below float precision (rational
    input), and never returns more than ``depth`` quotients -- deeper
    entries of a double-precision seed are numerical noise anyway.
    """
    if not math.isfinite(value):
        raise ValueError("value must be finite")
    out = []
    x = float(value)
    for _ in range(depth):
        a = math.floor(x)
        out.append(int(a))
        frac = x - a
        if frac < 1e-12:
            break
        x = 1.0 / frac
    return out
