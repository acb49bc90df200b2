"""Backend selection: compiled stepper core with a pure-python fallback.

The compiled extension (solenoid._speed, built from Cython) is picked up at
import time when present.  Selection can be forced with the environment
variable SOLENOID_BACKEND = "compiled" | "python" | "auto", or per call via
the ``prefer`` argument.  Fields without a compiled kernel (anything user
supplied) always run on the python backend, whatever the preference.
"""

from __future__ import annotations

import os

import numpy as np

from . import _purepy
from .fields import KernelSpec

try:
    from . import _speed  # type: ignore[attr-defined]

    HAVE_COMPILED = True
except ImportError:  # pragma: no cover - depends on the build
    _speed = None
    HAVE_COMPILED = False


def _preference(prefer=None) -> str:
    mode = prefer or os.environ.get("SOLENOID_BACKEND", "auto")
    if mode not in ("auto", "compiled", "python"):
        raise ValueError(f"unknown backend preference {mode!r}")
    if mode == "compiled" and not HAVE_COMPILED:
        raise RuntimeError("compiled backend requested but solenoid._speed is not built")
    return mode


def active_backend(prefer=None) -> str:
    """The backend that field_system would pick for a compiled-kernel field."""
    mode = _preference(prefer)
    if mode == "python":
        return "python"
    return "compiled" if HAVE_COMPILED else "python"


class CompiledSystem:
    """Wraps a compiled kernel; same stepper interface as _purepy.PySystem."""

    def __init__(self, spec: KernelSpec, with_monodromy: bool, n: int):
        self.spec = spec
        self.with_monodromy = with_monodromy
        self.n = n

    def stepper(self, atol, rtol):
        return _speed.make_stepper(
            self.spec.kind,
            np.asarray(self.spec.params, dtype=float),
            self.with_monodromy,
            atol,
            rtol,
        )


def field_system(field, with_monodromy=False, prefer=None):
    """System (n, stepper factory) advancing a 3-D field, with or without the
    synchronously integrated monodromy block."""
    mode = _preference(prefer)
    use_compiled = (
        mode != "python"
        and HAVE_COMPILED
        and field.kernel is not None
        and _speed.supports(field.kernel.kind)
    )
    if use_compiled:
        n = 12 if with_monodromy else 3
        return CompiledSystem(field.kernel, with_monodromy, n)
    rhs, n = _purepy.field_rhs(field, with_monodromy)
    return _purepy.PySystem(rhs, n)


def torus_system(chart, prefer=None):
    """2-D angular system (phi', psi') = (A, B) for a torus chart."""
    mode = _preference(prefer)
    kernel = getattr(chart, "kernel", None)
    if mode != "python" and HAVE_COMPILED and kernel is not None and _speed.supports(kernel.kind):
        return CompiledSystem(kernel, False, 2)

    A, B = chart.A, chart.B

    def rhs(t, y):
        return np.array([float(A(y[0], y[1])), float(B(y[0], y[1]))])

    return _purepy.PySystem(rhs, 2)


def generic_system(rhs, n):
    """Arbitrary python RHS (no compiled path)."""
    return _purepy.PySystem(rhs, n)
