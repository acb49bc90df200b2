"""Vector fields, scalar integrals, volume forms, and the analytic catalog.

Every catalog entry carries a closed-form Jacobian (and analytic gradients /
Hessians for its integrals), so variational integration and residual
certification run at full double precision without any symbolic machinery.

Fields on the 3-torus are evaluated on *lifted* (unwrapped) coordinates --
their formulas are periodic, so no wrapping is needed for evaluation.
``Domain.wrap`` is applied only when points are reported.
"""

from __future__ import annotations

import inspect
import math
from dataclasses import dataclass, field as _dfield
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

TWO_PI = 2.0 * math.pi

# Kernel kind codes; the compiled backend (_speed.pyx) mirrors these.
K_LINEAR_AFFINE = 0
K_ABC = 1
K_SHEAR = 2
K_CROSS_GRADIENT = 3
K_CONJUGATED = 4
K_SUSPENSION_COVER = 5
K_TORUS2_CONJUGATED = 6
K_TORUS2_CONSTANT = 7


@dataclass(frozen=True)
class KernelSpec:
    """Dispatch record for the compiled stepper: kind code + packed params."""

    kind: int
    params: tuple


@dataclass(frozen=True)
class Domain:
    kind: str  # "euclidean" | "torus"
    periods: Optional[tuple] = None

    def wrap(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind != "torus":
            return x
        return np.mod(x, np.asarray(self.periods, dtype=float))


EUCLIDEAN = Domain("euclidean")
TORUS_2PI = Domain("torus", (TWO_PI, TWO_PI, TWO_PI))


@dataclass(frozen=True)
class VectorField3:
    """Smooth vector field on R^3 or a 3-torus with an analytic Jacobian."""

    name: str
    eval_fn: Callable[[np.ndarray], np.ndarray]
    jac_fn: Callable[[np.ndarray], np.ndarray]
    domain: Domain = EUCLIDEAN
    kernel: Optional[KernelSpec] = None

    def eval(self, x) -> np.ndarray:
        return np.asarray(self.eval_fn(np.asarray(x, dtype=float)), dtype=float)

    def jacobian(self, x) -> np.ndarray:
        return np.asarray(self.jac_fn(np.asarray(x, dtype=float)), dtype=float)

    def __call__(self, x) -> np.ndarray:
        return self.eval(x)


@dataclass(frozen=True)
class VolumeForm:
    """Volume form rho(x) dx^dy^dz with a positive smooth density."""

    density_fn: Callable[[np.ndarray], float]
    grad_fn: Callable[[np.ndarray], np.ndarray]
    name: str = "volume"

    def density(self, x) -> float:
        return float(self.density_fn(np.asarray(x, dtype=float)))

    def grad(self, x) -> np.ndarray:
        return np.asarray(self.grad_fn(np.asarray(x, dtype=float)), dtype=float)

    @staticmethod
    def unit() -> "VolumeForm":
        return VolumeForm(lambda x: 1.0, lambda x: np.zeros(3), name="unit")


@dataclass(frozen=True)
class ScalarIntegral:
    """First integral F with analytic gradient and Hessian."""

    name: str
    eval_fn: Callable[[np.ndarray], float]
    grad_fn: Callable[[np.ndarray], np.ndarray]
    hess_fn: Callable[[np.ndarray], np.ndarray]

    def eval(self, x) -> float:
        return float(self.eval_fn(np.asarray(x, dtype=float)))

    def gradient(self, x) -> np.ndarray:
        return np.asarray(self.grad_fn(np.asarray(x, dtype=float)), dtype=float)

    def hessian(self, x) -> np.ndarray:
        return np.asarray(self.hess_fn(np.asarray(x, dtype=float)), dtype=float)

    def __call__(self, x) -> float:
        return self.eval(x)


@dataclass(frozen=True)
class TorusChartData:
    """Angle-chart data (A, B, a) for an invariant 2-torus of a catalog field.

    ``A`` and ``B`` are the angular velocity components, ``a`` the invariant
    density in the chart.  All three accept numpy arrays (broadcasting), which
    the spectral/quadrature routines rely on.  ``kernel`` optionally points at
    a compiled 2-D kernel for orbit integration.
    """

    A: Callable
    B: Callable
    a: Callable
    kernel: Optional[KernelSpec] = None
    label: str = ""


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    field: VectorField3
    volume: VolumeForm
    integral: Optional[ScalarIntegral] = None
    second_integral: Optional[ScalarIntegral] = None
    divergence_free: bool = True
    params: dict = _dfield(default_factory=dict)
    # c -> TorusChartData for the invariant torus {F = c}, when one exists
    torus_chart: Optional[Callable[[float], TorusChartData]] = None
    # (c, n, seed) -> (n, 3) points on the level set {F = c}
    level_sampler: Optional[Callable[[float, int, int], np.ndarray]] = None
    # (n, seed) -> (n, 3) quasi-random points in the natural domain box
    sample_points: Optional[Callable[[int, int], np.ndarray]] = None


# ----------------------------------------------------------------------------
# differential operators


def divergence(X: VectorField3, volume: VolumeForm, x) -> float:
    """Divergence of X with respect to the weighted volume form.

    For density rho this is trace(DX) + grad(rho).X / rho, which reduces to
    the coordinate divergence when rho is constant.
    """
    x = np.asarray(x, dtype=float)
    tr = float(np.trace(X.jacobian(x)))
    rho = volume.density(x)
    return tr + float(np.dot(volume.grad(x), X.eval(x))) / rho


def integral_defect(X: VectorField3, F: ScalarIntegral, x) -> float:
    """Directional derivative of F along X; zero iff F is conserved at x."""
    x = np.asarray(x, dtype=float)
    return float(np.dot(F.gradient(x), X.eval(x)))


# ----------------------------------------------------------------------------
# samplers


def _halton(n: int, d: int, seed: int, lo, hi) -> np.ndarray:
    eng = qmc.Halton(d=d, scramble=True, seed=seed)
    return qmc.scale(eng.random(n), lo, hi)


def _torus_box_sampler(n: int, seed: int) -> np.ndarray:
    return _halton(n, 3, seed, [0.0, 0.0, 0.0], [TWO_PI, TWO_PI, TWO_PI])


def _unit_box_sampler(n: int, seed: int) -> np.ndarray:
    return _halton(n, 3, seed, [-1.0, -1.0, -1.0], [1.0, 1.0, 1.0])


# ----------------------------------------------------------------------------
# catalog entries


def _sin_z_integral() -> ScalarIntegral:
    return ScalarIntegral(
        "sin_z",
        lambda x: math.sin(x[2]),
        lambda x: np.array([0.0, 0.0, math.cos(x[2])]),
        lambda x: np.diag([0.0, 0.0, -math.sin(x[2])]),
    )


def _sin_z_level_sampler(c: float, n: int, seed: int) -> np.ndarray:
    if not -1.0 < c < 1.0:
        raise ValueError(f"level c={c} is outside (-1, 1); the level set of sin z is singular or empty")
    z0 = math.asin(c)
    xy = _halton(n, 2, seed, [0.0, 0.0], [TWO_PI, TWO_PI])
    return np.column_stack([xy, np.full(n, z0)])


def _build_abc(A: float = 1.0, B: float = 1.0, C: float = 1.0) -> CatalogEntry:
    """The classical three-parameter trigonometric field on the 3-torus.

    Divergence-free for every (A, B, C); carries no global first integral.
    """

    def ev(x):
        return np.array(
            [
                A * math.sin(x[2]) + C * math.cos(x[1]),
                B * math.sin(x[0]) + A * math.cos(x[2]),
                C * math.sin(x[1]) + B * math.cos(x[0]),
            ]
        )

    def jac(x):
        return np.array(
            [
                [0.0, -C * math.sin(x[1]), A * math.cos(x[2])],
                [B * math.cos(x[0]), 0.0, -A * math.sin(x[2])],
                [-B * math.sin(x[0]), C * math.cos(x[1]), 0.0],
            ]
        )

    fld = VectorField3(
        f"abc(A={A},B={B},C={C})",
        ev,
        jac,
        domain=TORUS_2PI,
        kernel=KernelSpec(K_ABC, (A, B, C)),
    )
    return CatalogEntry(
        name="abc",
        field=fld,
        volume=VolumeForm.unit(),
        params=dict(A=A, B=B, C=C),
        sample_points=_torus_box_sampler,
    )


def _build_shear_torus(
    a0: float = 2.0, a1: float = 1.0, b0: float = 1.0, b1: float = 0.0
) -> CatalogEntry:
    """Shear flow (A(z), B(z), 0) on the 3-torus with A(z) = a0 + a1 cos z,
    B(z) = b0 + b1 cos z.  First integral F = sin z; every level |c| < 1 is an
    invariant 2-torus carrying a constant chart flow."""

    def Afun(z):
        return a0 + a1 * np.cos(z)

    def Bfun(z):
        return b0 + b1 * np.cos(z)

    def ev(x):
        return np.array([a0 + a1 * math.cos(x[2]), b0 + b1 * math.cos(x[2]), 0.0])

    def jac(x):
        return np.array(
            [
                [0.0, 0.0, -a1 * math.sin(x[2])],
                [0.0, 0.0, -b1 * math.sin(x[2])],
                [0.0, 0.0, 0.0],
            ]
        )

    def chart(c: float) -> TorusChartData:
        if not -1.0 < c < 1.0:
            raise ValueError(f"no invariant torus at level c={c}")
        z0 = math.asin(c)
        cz = math.cos(z0)
        A0, B0 = a0 + a1 * cz, b0 + b1 * cz
        return TorusChartData(
            A=lambda p, q: np.broadcast_to(A0, np.broadcast(p, q).shape).copy(),
            B=lambda p, q: np.broadcast_to(B0, np.broadcast(p, q).shape).copy(),
            a=lambda p, q: np.broadcast_to(1.0 / cz, np.broadcast(p, q).shape).copy(),
            kernel=KernelSpec(K_TORUS2_CONSTANT, (A0, B0)),
            label=f"shear level c={c}",
        )

    fld = VectorField3(
        f"shear_torus(a0={a0},a1={a1},b0={b0},b1={b1})",
        ev,
        jac,
        domain=TORUS_2PI,
        kernel=KernelSpec(K_SHEAR, (a0, a1, b0, b1)),
    )
    return CatalogEntry(
        name="shear_torus",
        field=fld,
        volume=VolumeForm.unit(),
        integral=_sin_z_integral(),
        params=dict(a0=a0, a1=a1, b0=b0, b1=b1),
        torus_chart=chart,
        level_sampler=_sin_z_level_sampler,
        sample_points=_torus_box_sampler,
    )


def _build_conjugated_torus(
    omega1: float = 1.0,
    omega2: float = math.sqrt(2.0),
    delta: float = 0.4,
    sigma: float = 0.3,
) -> CatalogEntry:
    """Conjugated-and-reparameterized linear torus flow.

    Start from the constant field (omega1, omega2) on the 2-torus, push it
    forward by the area-preserving shear (phi, psi) -> (phi + delta sin psi,
    psi), then rescale time by s(phi, psi) = 1 + sigma sin(phi + 2 psi).
    The resulting 3-D field (z-independent, z' = 0) preserves the volume form
    with density 1/s, so the entry ships a nonconstant volume form.  Rotation
    numbers are exact: the ratio is omega1/omega2 for every level torus.
    """
    if not 0.0 <= sigma < 1.0:
        raise ValueError("sigma must lie in [0, 1) so the time rescale stays positive")

    w1, w2 = omega1, omega2

    def _s(p, q):
        return 1.0 + sigma * np.sin(p + 2.0 * q)

    def _At(q):
        return w1 + w2 * delta * np.cos(q)

    def ev(x):
        s = 1.0 + sigma * math.sin(x[0] + 2.0 * x[1])
        At = w1 + w2 * delta * math.cos(x[1])
        return np.array([s * At, s * w2, 0.0])

    def jac(x):
        cpq = math.cos(x[0] + 2.0 * x[1])
        s = 1.0 + sigma * math.sin(x[0] + 2.0 * x[1])
        sx, sy = sigma * cpq, 2.0 * sigma * cpq
        At = w1 + w2 * delta * math.cos(x[1])
        At_y = -w2 * delta * math.sin(x[1])
        return np.array(
            [
                [sx * At, sy * At + s * At_y, 0.0],
                [sx * w2, sy * w2, 0.0],
                [0.0, 0.0, 0.0],
            ]
        )

    def rho(x):
        return 1.0 / (1.0 + sigma * math.sin(x[0] + 2.0 * x[1]))

    def rho_grad(x):
        cpq = math.cos(x[0] + 2.0 * x[1])
        s = 1.0 + sigma * math.sin(x[0] + 2.0 * x[1])
        return np.array([-sigma * cpq / s**2, -2.0 * sigma * cpq / s**2, 0.0])

    def chart(c: float) -> TorusChartData:
        if not -1.0 < c < 1.0:
            raise ValueError(f"no invariant torus at level c={c}")
        cz = math.cos(math.asin(c))
        return TorusChartData(
            A=lambda p, q: _s(p, q) * _At(q),
            B=lambda p, q: _s(p, q) * w2,
            a=lambda p, q: 1.0 / (_s(p, q) * cz),
            kernel=KernelSpec(K_TORUS2_CONJUGATED, (w1, w2, delta, sigma)),
            label=f"conjugated level c={c}",
        )

    fld = VectorField3(
        f"conjugated_torus(w1={w1},w2={w2},delta={delta},sigma={sigma})",
        ev,
        jac,
        domain=TORUS_2PI,
        kernel=KernelSpec(K_CONJUGATED, (w1, w2, delta, sigma)),
    )
    vol = VolumeForm(rho, rho_grad, name="1/s")
    return CatalogEntry(
        name="conjugated_torus",
        field=fld,
        volume=vol,
        integral=_sin_z_integral(),
        params=dict(omega1=omega1, omega2=omega2, delta=delta, sigma=sigma),
        torus_chart=chart,
        level_sampler=_sin_z_level_sampler,
        sample_points=_torus_box_sampler,
    )


def _build_cross_gradient(
    qx: float = 1.0, qy: float = 1.0, qz: float = 1.0, gamma: float = 0.0
) -> CatalogEntry:
    """X = grad F x grad G for the quadric F = qx x^2 + qy y^2 + qz z^2 and
    the tilted plane G = z + gamma x.  Super-integrable: both F and G are
    conserved, and X is divergence-free for the standard volume."""

    def ev(x):
        return np.array(
            [
                2.0 * qy * x[1],
                2.0 * gamma * qz * x[2] - 2.0 * qx * x[0],
                -2.0 * gamma * qy * x[1],
            ]
        )

    def jac(x):
        return np.array(
            [
                [0.0, 2.0 * qy, 0.0],
                [-2.0 * qx, 0.0, 2.0 * gamma * qz],
                [0.0, -2.0 * gamma * qy, 0.0],
            ]
        )

    F = ScalarIntegral(
        "quadric",
        lambda x: qx * x[0] ** 2 + qy * x[1] ** 2 + qz * x[2] ** 2,
        lambda x: np.array([2.0 * qx * x[0], 2.0 * qy * x[1], 2.0 * qz * x[2]]),
        lambda x: np.diag([2.0 * qx, 2.0 * qy, 2.0 * qz]),
    )
    G = ScalarIntegral(
        "plane",
        lambda x: x[2] + gamma * x[0],
        lambda x: np.array([gamma, 0.0, 1.0]),
        lambda x: np.zeros((3, 3)),
    )

    def level_sampler(c: float, n: int, seed: int) -> np.ndarray:
        if c <= 0.0:
            raise ValueError(f"quadric level c={c} must be positive")
        rng = np.random.default_rng(seed)
        u = rng.normal(size=(n, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        scale = np.sqrt(c / (qx * u[:, 0] ** 2 + qy * u[:, 1] ** 2 + qz * u[:, 2] ** 2))
        return u * scale[:, None]

    fld = VectorField3(
        f"cross_gradient(qx={qx},qy={qy},qz={qz},gamma={gamma})",
        ev,
        jac,
        domain=EUCLIDEAN,
        kernel=KernelSpec(K_CROSS_GRADIENT, (qx, qy, qz, gamma)),
    )
    return CatalogEntry(
        name="cross_gradient",
        field=fld,
        volume=VolumeForm.unit(),
        integral=F,
        second_integral=G,
        params=dict(qx=qx, qy=qy, qz=qz, gamma=gamma),
        level_sampler=level_sampler,
        sample_points=_unit_box_sampler,
    )


_DEFAULT_TRACE_FREE = (
    (0.2, 1.0, 0.3),
    (-0.7, 0.1, 0.5),
    (0.4, -0.2, -0.3),
)


def _build_linear_trace_free(matrix=_DEFAULT_TRACE_FREE) -> CatalogEntry:
    """Linear field X = A x for a trace-free 3x3 matrix A."""
    A = np.array(matrix, dtype=float)
    if A.shape != (3, 3):
        raise ValueError("matrix must be 3x3")
    if abs(np.trace(A)) > 1e-12:
        raise ValueError(f"matrix must be trace-free, got trace {np.trace(A)}")

    params = A.ravel()
    fld = VectorField3(
        "linear_trace_free",
        lambda x: A @ x,
        lambda x: A.copy(),
        domain=EUCLIDEAN,
        kernel=KernelSpec(K_LINEAR_AFFINE, tuple(params) + (0.0, 0.0, 0.0)),
    )
    return CatalogEntry(
        name="linear_trace_free",
        field=fld,
        volume=VolumeForm.unit(),
        params=dict(matrix=tuple(map(tuple, A))),
        sample_points=_unit_box_sampler,
    )


_CATALOG = {
    "abc": _build_abc,
    "shear_torus": _build_shear_torus,
    "conjugated_torus": _build_conjugated_torus,
    "cross_gradient": _build_cross_gradient,
    "linear_trace_free": _build_linear_trace_free,
}


def catalog(name: str, **params) -> CatalogEntry:
    """Look up an analytic field by name.  Unknown names raise NameError."""
    try:
        builder = _CATALOG[name]
    except KeyError:
        raise NameError(
            f"unknown catalog field {name!r}; available: {', '.join(sorted(_CATALOG))}"
        ) from None
    return builder(**params)


def catalog_names() -> tuple:
    return tuple(sorted(_CATALOG))


def catalog_params(name: str) -> dict:
    """Parameter names and defaults of a catalog entry (for config validation)."""
    if name not in _CATALOG:
        raise NameError(f"unknown catalog field {name!r}")
    sig = inspect.signature(_CATALOG[name])
    return {k: v.default for k, v in sig.parameters.items()}


def constant_field(v, domain: Domain = TORUS_2PI, name: str = "constant") -> VectorField3:
    """Convenience constructor for a constant field (used widely in tests)."""
    v = np.asarray(v, dtype=float)
    A = np.zeros((3, 3))
    return VectorField3(
        name,
        lambda x: v.copy(),
        lambda x: A.copy(),
        domain=domain,
        kernel=KernelSpec(K_LINEAR_AFFINE, tuple(A.ravel()) + tuple(v)),
    )
