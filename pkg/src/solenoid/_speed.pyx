# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled Dormand-Prince 5(4) stepper for the catalog kernels.

Same tableau, same scaled-RMS error norm as solenoid._purepy -- the adaptive
loop in solenoid.flow drives either one interchangeably.  Only fields with a
registered kernel kind run here; everything else stays on the pure backend.
"""

from libc.math cimport sin, cos, sqrt, fabs

import numpy as np

# kernel kinds (mirrors solenoid.fields)
DEF K_LINEAR_AFFINE = 0
DEF K_ABC = 1
DEF K_SHEAR = 2
DEF K_CROSS_GRADIENT = 3
DEF K_CONJUGATED = 4
DEF K_SUSPENSION_COVER = 5
DEF K_TORUS2_CONJUGATED = 6
DEF K_TORUS2_CONSTANT = 7

DEF NMAX = 12

# Dormand-Prince 5(4)
DEF C2 = 0.2
DEF C3 = 0.3
DEF C4 = 0.8
DEF C5 = 8.0 / 9.0
DEF A21 = 0.2
DEF A31 = 3.0 / 40.0
DEF A32 = 9.0 / 40.0
DEF A41 = 44.0 / 45.0
DEF A42 = -56.0 / 15.0
DEF A43 = 32.0 / 9.0
DEF A51 = 19372.0 / 6561.0
DEF A52 = -25360.0 / 2187.0
DEF A53 = 64448.0 / 6561.0
DEF A54 = -212.0 / 729.0
DEF A61 = 9017.0 / 3168.0
DEF A62 = -355.0 / 33.0
DEF A63 = 46732.0 / 5247.0
DEF A64 = 49.0 / 176.0
DEF A65 = -5103.0 / 18656.0
DEF B1 = 35.0 / 384.0
DEF B3 = 500.0 / 1113.0
DEF B4 = 125.0 / 192.0
DEF B5 = -2187.0 / 6784.0
DEF B6 = 11.0 / 84.0
DEF E1 = 71.0 / 57600.0
DEF E3 = -71.0 / 16695.0
DEF E4 = 71.0 / 1920.0
DEF E5 = -17253.0 / 339200.0
DEF E6 = 22.0 / 525.0
DEF E7 = -1.0 / 40.0

_SUPPORTED = (
    K_LINEAR_AFFINE, K_ABC, K_SHEAR, K_CROSS_GRADIENT, K_CONJUGATED,
    K_TORUS2_CONJUGATED, K_TORUS2_CONSTANT,
)


def supports(int kind):
    """Whether this extension has a hand-written RHS for the kernel kind."""
    return kind in _SUPPORTED


cdef class Stepper:
    cdef int kind
    cdef int n
    cdef bint monodromy
    cdef double atol
    cdef double rtol
    cdef double prm[16]

    def __init__(self, int kind, params, bint monodromy, double atol, double rtol):
        cdef double[::1] p = np.ascontiguousarray(params, dtype=np.float64)
        cdef Py_ssize_t i
        if not supports(kind):
            raise ValueError(f"kernel kind {kind} is not compiled")
        if p.shape[0] > 16:
            raise ValueError("too many kernel parameters")
        for i in range(p.shape[0]):
            self.prm[i] = p[i]
        self.kind = kind
        self.monodromy = monodromy
        if kind == K_TORUS2_CONJUGATED or kind == K_TORUS2_CONSTANT:
            if monodromy:
                raise ValueError("torus kernels carry no monodromy block")
            self.n = 2
        else:
            self.n = 12 if monodromy else 3
        self.atol = atol
        self.rtol = rtol

    cdef void _vel3(self, double* y, double* out) noexcept nogil:
        cdef double s, at, cpq
        if self.kind == K_LINEAR_AFFINE:
            out[0] = self.prm[0] * y[0] + self.prm[1] * y[1] + self.prm[2] * y[2] + self.prm[9]
            out[1] = self.prm[3] * y[0] + self.prm[4] * y[1] + self.prm[5] * y[2] + self.prm[10]
            out[2] = self.prm[6] * y[0] + self.prm[7] * y[1] + self.prm[8] * y[2] + self.prm[11]
        elif self.kind == K_ABC:
            out[0] = self.prm[0] * sin(y[2]) + self.prm[2] * cos(y[1])
            out[1] = self.prm[1] * sin(y[0]) + self.prm[0] * cos(y[2])
            out[2] = self.prm[2] * sin(y[1]) + self.prm[1] * cos(y[0])
        elif self.kind == K_SHEAR:
            out[0] = self.prm[0] + self.prm[1] * cos(y[2])
            out[1] = self.prm[2] + self.prm[3] * cos(y[2])
            out[2] = 0.0
        elif self.kind == K_CROSS_GRADIENT:
            out[0] = 2.0 * self.prm[1] * y[1]
            out[1] = 2.0 * self.prm[3] * self.prm[2] * y[2] - 2.0 * self.prm[0] * y[0]
            out[2] = -2.0 * self.prm[3] * self.prm[1] * y[1]
        else:  # K_CONJUGATED
            s = 1.0 + self.prm[3] * sin(y[0] + 2.0 * y[1])
            at = self.prm[0] + self.prm[1] * self.prm[2] * cos(y[1])
            out[0] = s * at
            out[1] = s * self.prm[1]
            out[2] = 0.0

    cdef void _jac3(self, double* y, double* J) noexcept nogil:
        cdef double s, at, cpq, sx, sy, at_y
        cdef int i
        for i in range(9):
            J[i] = 0.0
        if self.kind == K_LINEAR_AFFINE:
            for i in range(9):
                J[i] = self.prm[i]
        elif self.kind == K_ABC:
            J[1] = -self.prm[2] * sin(y[1])
            J[2] = self.prm[0] * cos(y[2])
            J[3] = self.prm[1] * cos(y[0])
            J[5] = -self.prm[0] * sin(y[2])
            J[6] = -self.prm[1] * sin(y[0])
            J[7] = self.prm[2] * cos(y[1])
        elif self.kind == K_SHEAR:
            J[2] = -self.prm[1] * sin(y[2])
            J[5] = -self.prm[3] * sin(y[2])
        elif self.kind == K_CROSS_GRADIENT:
            J[1] = 2.0 * self.prm[1]
            J[3] = -2.0 * self.prm[0]
            J[5] = 2.0 * self.prm[3] * self.prm[2]
            J[7] = -2.0 * self.prm[3] * self.prm[1]
        else:  # K_CONJUGATED
            cpq = cos(y[0] + 2.0 * y[1])
            s = 1.0 + self.prm[3] * sin(y[0] + 2.0 * y[1])
            sx = self.prm[3] * cpq
            sy = 2.0 * self.prm[3] * cpq
            at = self.prm[0] + self.prm[1] * self.prm[2] * cos(y[1])
            at_y = -self.prm[1] * self.prm[2] * sin(y[1])
            J[0] = sx * at
            J[1] = sy * at + s * at_y
            J[3] = sx * self.prm[1]
            J[4] = sy * self.prm[1]

    cdef void _rhs(self, double t, double* y, double* out) noexcept nogil:
        cdef double J[9]
        cdef double s, at
        cdef int i, j, k
        if self.kind == K_TORUS2_CONSTANT:
            out[0] = self.prm[0]
            out[1] = self.prm[1]
            return
        if self.kind == K_TORUS2_CONJUGATED:
            s = 1.0 + self.prm[3] * sin(y[0] + 2.0 * y[1])
            at = self.prm[0] + self.prm[1] * self.prm[2] * cos(y[1])
            out[0] = s * at
            out[1] = s * self.prm[1]
            return
        self._vel3(y, out)
        if self.monodromy:
            self._jac3(y, J)
            for i in range(3):
                for j in range(3):
                    s = 0.0
                    for k in range(3):
                        s += J[3 * i + k] * y[3 + 3 * k + j]
                    out[3 + 3 * i + j] = s

    def rhs_eval(self, double t, y):
        cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
        out = np.empty(self.n)
        cdef double[::1] ov = out
        self._rhs(t, &yv[0], &ov[0])
        return out

    def step(self, double t, y, double h, f0):
        """One embedded step; returns (y_new, f_new, err_norm), FSAL style."""
        cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
        cdef double[::1] fv = np.ascontiguousarray(f0, dtype=np.float64)
        cdef double k1[NMAX]
        cdef double k2[NMAX]
        cdef double k3[NMAX]
        cdef double k4[NMAX]
        cdef double k5[NMAX]
        cdef double k6[NMAX]
        cdef double k7[NMAX]
        cdef double yt[NMAX]
        cdef double yn[NMAX]
        cdef double erri, scale, acc
        cdef int i, n = self.n

        y_new = np.empty(n)
        f_new = np.empty(n)
        cdef double[::1] ynv = y_new
        cdef double[::1] fnv = f_new

        with nogil:
            for i in range(n):
                k1[i] = fv[i]
            for i in range(n):
                yt[i] = yv[i] + h * (A21 * k1[i])
            self._rhs(t + C2 * h, yt, k2)
            for i in range(n):
                yt[i] = yv[i] + h * (A31 * k1[i] + A32 * k2[i])
            self._rhs(t + C3 * h, yt, k3)
            for i in range(n):
                yt[i] = yv[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
            self._rhs(t + C4 * h, yt, k4)
            for i in range(n):
                yt[i] = yv[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
            self._rhs(t + C5 * h, yt, k5)
            for i in range(n):
                yt[i] = yv[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i]
                                     + A64 * k4[i] + A65 * k5[i])
            self._rhs(t + h, yt, k6)
            for i in range(n):
                yn[i] = yv[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i]
                                     + B5 * k5[i] + B6 * k6[i])
            self._rhs(t + h, yn, k7)
            acc = 0.0
            for i in range(n):
                erri = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i]
                            + E6 * k6[i] + E7 * k7[i])
                scale = self.atol + self.rtol * (fabs(yv[i]) if fabs(yv[i]) > fabs(yn[i]) else fabs(yn[i]))
                acc += (erri / scale) * (erri / scale)
            acc = sqrt(acc / n)
            for i in range(n):
                ynv[i] = yn[i]
                fnv[i] = k7[i]
        return y_new, f_new, acc


def make_stepper(int kind, params, bint monodromy, double atol, double rtol):
    return Stepper(kind, params, monodromy, atol, rtol)
