"""Pure-python Dormand-Prince 5(4) stepper: the reference backend.

The compiled backend (_speed.pyx) implements the same tableau and the same
scaled-RMS error norm; the adaptive loop itself lives in `flow` and is shared
by both, so the backends differ only in how one embedded step is computed.
"""

from __future__ import annotations

import numpy as np

# Dormand-Prince 5(4) coefficients.
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0

A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
B1, B3, B4, B5, B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
# fifth-order minus embedded fourth-order weights
E1, E3, E4, E5, E6, E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)


class PyStepper:
    """One embedded DP45 step at a time; FSAL (returns f at the new point)."""

    def __init__(self, rhs, n, atol, rtol):
        self.rhs = rhs
        self.n = n
        self.atol = atol
        self.rtol = rtol

    def rhs_eval(self, t, y):
        return self.rhs(t, y)

    def step(self, t, y, h, f0):
        """Attempt one step of (signed) size h.  Returns (y_new, f_new, err_norm)."""
        rhs = self.rhs
        k1 = f0
        k2 = rhs(t + C2 * h, y + h * (A21 * k1))
        k3 = rhs(t + C3 * h, y + h * (A31 * k1 + A32 * k2))
        k4 = rhs(t + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3))
        k5 = rhs(t + C5 * h, y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
        k6 = rhs(t + h, y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
        y_new = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
        k7 = rhs(t + h, y_new)
        err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
        scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
        return y_new, k7, err_norm


class PySystem:
    """An ODE system evaluated in python; rhs(t, y) -> dy/dt."""

    def __init__(self, rhs, n):
        self.rhs = rhs
        self.n = n

    def stepper(self, atol, rtol):
        return PyStepper(self.rhs, self.n, atol, rtol)


def field_rhs(field, with_monodromy):
    """RHS for a 3-D field, optionally augmented with the 3x3 monodromy block
    (rows of M stored flat in y[3:12]; dM/dt = DX(x) M, integrated in sync)."""
    if not with_monodromy:
        def rhs(t, y):
            return field.eval_fn(y)

        return rhs, 3

    def rhs_aug(t, y):
        x = y[:3]
        out = np.empty(12)
        out[:3] = field.eval_fn(x)
        J = field.jac_fn(x)
        M = y[3:].reshape(3, 3)
        out[3:] = (J @ M).ravel()
        return out

    return rhs_aug, 12
