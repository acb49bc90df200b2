"""Return maps: analytic shear oracle, invariant-area identity, orbit Newton.

The periodic-orbit tests use a cellular suspension X = (-psi_y, psi_x, c)
with stream function psi = sin x sin y: the section z = 0 returns after
exactly T = 2 pi / c, and the return map is the time-T map of the planar
Hamiltonian flow, whose fixed points and multipliers are known in closed
form (e^{+-T} at the saddle, e^{+-iT} at the center).
"""

import math

import numpy as np
import pytest

from solenoid import catalog
from solenoid.fields import Domain, TORUS_2PI, VectorField3, VolumeForm
from solenoid.poincare import (
    NewtonDiverged,
    SingularJacobian,
    classify_multipliers,
    coordinate_plane_section,
    find_periodic_orbit,
    plane_section,
    return_map,
    symplecticity_residual,
)

C_DRIFT = 4.0  # vertical speed of the cellular suspension


def _cellular():
    def ev(x):
        return np.array(
            [-math.sin(x[0]) * math.cos(x[1]),
             math.cos(x[0]) * math.sin(x[1]),
             C_DRIFT]
        )

    def jac(x):
        cx, sx = math.cos(x[0]), math.sin(x[0])
        cy, sy = math.cos(x[1]), math.sin(x[1])
        return np.array(
            [[-cx * cy, sx * sy, 0.0],
             [-sx * sy, cx * cy, 0.0],
             [0.0, 0.0, 0.0]]
        )

    return VectorField3("cellular", ev, jac, domain=TORUS_2PI, kernel=None)


def _z_section():
    return coordinate_plane_section(axis=2, value=0.0, domain=TORUS_2PI)


def test_shear_return_map_analytic():
    """P(y, z) = (y + 2 pi B(z)/A(z), z) on the section x = const."""
    entry = catalog("shear_torus")
    sec = coordinate_plane_section(axis=0, value=0.5, domain=TORUS_2PI)
    z0 = 1.1
    x = np.array([0.5, 0.3, z0])
    rm = return_map(entry.field, entry.volume, sec, x)
    A = 2.0 + np.cos(z0)
    assert rm.t == pytest.approx(2 * np.pi / A, abs=1e-11)
    assert rm.px[1] == pytest.approx(0.3 + 2 * np.pi / A, abs=1e-9)
    assert rm.px[2] == pytest.approx(z0, abs=1e-11)
    dp_exact = np.array([[1.0, 2 * np.pi * np.sin(z0) / A ** 2], [0.0, 1.0]])
    assert np.max(np.abs(rm.dp - dp_exact)) < 1e-8
    assert rm.w_start == pytest.approx(A, rel=1e-12)
    assert rm.symplectic_residual < 1e-10


def test_return_map_requires_on_section_start():
    entry = catalog("shear_torus")
    sec = coordinate_plane_section(axis=0, value=0.5, domain=TORUS_2PI)
    with pytest.raises(ValueError):
        return_map(entry.field, entry.volume, sec, np.array([0.6, 0.0, 1.0]))


def test_symplecticity_with_nonconstant_density():
    """Invariant-area identity holds with rho != 1 (conjugated torus flow)."""
    entry = catalog("conjugated_torus")
    sec = coordinate_plane_section(axis=1, value=0.0, domain=TORUS_2PI)
    rng = np.random.default_rng(12)
    for _ in range(6):
        x = np.array([rng.uniform(0, 2 * np.pi), 0.0, rng.uniform(0, 2 * np.pi)])
        resid = symplecticity_residual(entry.field, entry.volume, sec, x)
        assert resid < 1e-9


def test_plane_section_round_trip_and_validation():
    sec = plane_section([0.0, 0.0, 2.0], [0.1, 0.2, 0.3])
    q = np.array([0.4, -1.2])
    x = sec.from_chart(q)
    assert sec.on_section_defect(x) < 1e-15
    assert np.allclose(sec.to_chart(x), q)
    with pytest.raises(ValueError):
        plane_section([0.0, 0.0, 0.0], [0.0, 0.0, 0.0])


def test_parabolic_plane_return():
    """Drifting rotation returns to a plane with DP = identity."""
    field = VectorField3(
        "rotation_drift",
        lambda x: np.array([-x[1], x[0], 0.1]),
        lambda x: np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
        domain=Domain("euclidean", None),
        kernel=None,
    )
    sec = plane_section([0.0, 1.0, 0.0], [0.0, 0.0, 0.0])
    rm = return_map(field, VolumeForm.unit(), sec, np.array([1.0, 0.0, 0.0]))
    assert rm.t == pytest.approx(2 * np.pi, abs=1e-10)
    assert np.max(np.abs(rm.dp - np.eye(2))) < 1e-9
    assert rm.symplectic_residual < 1e-10
    assert classify_multipliers(np.linalg.eigvals(rm.dp)) == "parabolic"


def test_cellular_saddle_orbit():
    field = _cellular()
    sec = _z_section()
    T = 2 * np.pi / C_DRIFT
    orb = find_periodic_orbit(field, VolumeForm.unit(), sec, np.array([0.15, -0.1, 0.0]))
    # converged onto the stagnation orbit through (0, 0)
    assert abs(math.remainder(orb.x[0], 2 * np.pi)) < 1e-9
    assert abs(math.remainder(orb.x[1], 2 * np.pi)) < 1e-9
    assert orb.period == pytest.approx(T, abs=1e-10)
    assert orb.classification == "saddle_orientable"
    mus = np.sort(orb.multipliers.real)
    assert mus[1] == pytest.approx(math.exp(T), rel=1e-7)
    assert mus[0] == pytest.approx(math.exp(-T), rel=1e-7)
    assert orb.chart_residual < 1e-11


def test_cellular_center_orbit():
    field = _cellular()
    sec = _z_section()
    T = 2 * np.pi / C_DRIFT
    x0 = np.array([np.pi / 2 + 0.2, np.pi / 2 - 0.15, 0.0])
    orb = find_periodic_orbit(field, VolumeForm.unit(), sec, x0)
    assert orb.x[0] == pytest.approx(np.pi / 2, abs=1e-9)
    assert orb.x[1] == pytest.approx(np.pi / 2, abs=1e-9)
    assert orb.classification == "elliptic"
    # multipliers e^{+-iT} on the unit circle
    assert np.allclose(np.abs(orb.multipliers), 1.0, atol=1e-8)
    assert orb.multipliers[0].real == pytest.approx(math.cos(T), abs=1e-7)


def test_integrable_shear_raises_singular_jacobian():
    entry = catalog("shear_torus")
    sec = coordinate_plane_section(axis=0, value=0.0, domain=TORUS_2PI)
    with pytest.raises(SingularJacobian):
        find_periodic_orbit(entry.field, entry.volume, sec, np.array([0.0, 0.4, 0.9]))


def test_newton_budget_exhaustion_reports_divergence():
    field = _cellular()
    sec = _z_section()
    with pytest.raises(NewtonDiverged):
        find_periodic_orbit(field, VolumeForm.unit(), sec,
                            np.array([1.2, 0.4, 0.0]), max_iter=1)


def test_classify_multipliers_cases():
    assert classify_multipliers([2.0, 0.5]) == "saddle_orientable"
    assert classify_multipliers([-2.0, -0.5]) == "saddle_nonorientable"
    th = 0.7
    assert classify_multipliers([np.exp(1j * th), np.exp(-1j * th)]) == "elliptic"
    assert classify_multipliers([1.0 + 1e-8, 1.0 - 1e-8]) == "parabolic"
    assert classify_multipliers([-1.0 + 1e-8, -1.0 - 1e-8]) == "parabolic"
    assert classify_multipliers(np.array([[0.0, -1.0], [1.0, 0.0]])) == "elliptic"
    with pytest.raises(ValueError):
        classify_multipliers([2.0, -0.5])
    with pytest.raises(ValueError):
        classify_multipliers([1.0, 2.0, 3.0])


def test_chart_delta_wraps_on_torus():
    sec = coordinate_plane_section(axis=2, value=0.0, domain=TORUS_2PI)
    a = np.array([6.2, 0.1, 0.0])
    b = np.array([0.1, 6.2, 0.0])
    d = sec.chart_delta(a, b)
    assert np.max(np.abs(d - np.array([6.1 - 2 * np.pi, 0.1 - 6.2 + 2 * np.pi]))) < 1e-12
