"""Catalog fields: divergence-free identities, analytic Jacobians, invariants."""

import numpy as np
import pytest

from solenoid import (
    catalog,
    catalog_names,
    catalog_params,
    divergence,
    integral_defect,
)
from solenoid.fields import Domain, constant_field


RNG = np.random.default_rng(20240817)


def _sample_box(n, lo=-2.5, hi=2.5):
    return RNG.uniform(lo, hi, size=(n, 3))


@pytest.mark.parametrize("name", catalog_names())
def test_weighted_divergence_vanishes(name):
    """trace(DX) + (grad rho . X)/rho must cancel identically."""
    entry = catalog(name)
    for x in _sample_box(60):
        assert abs(divergence(entry.field, entry.volume, x)) < 5e-13


@pytest.mark.parametrize("name", catalog_names())
def test_jacobian_matches_central_differences(name):
    entry = catalog(name)
    h = 1e-6
    for x in _sample_box(12, -1.5, 1.5):
        J = entry.field.jacobian(x)
        Jfd = np.empty((3, 3))
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            Jfd[:, j] = (entry.field.eval(x + e) - entry.field.eval(x - e)) / (2 * h)
        assert np.max(np.abs(J - Jfd)) < 5e-8


@pytest.mark.parametrize("name", catalog_names())
def test_declared_integrals_are_invariant(name):
    """grad F . X = 0 wherever a first (or second) integral is declared."""
    entry = catalog(name)
    integrals = [entry.integral, entry.second_integral]
    for F in integrals:
        if F is None:
            continue
        for x in _sample_box(40):
            assert abs(integral_defect(entry.field, F, x)) < 1e-12


def test_catalog_unknown_name_lists_alternatives():
    with pytest.raises(NameError) as err:
        catalog("vortex_sheet")
    msg = str(err.value)
    for name in catalog_names():
        assert name in msg


def test_catalog_parameter_override():
    entry = catalog("abc", A=2.0, B=0.3, C=0.0)
    x = np.array([0.4, 1.2, -0.6])
    expected = np.array(
        [2.0 * np.sin(x[2]) + 0.0 * np.cos(x[1]),
         0.3 * np.sin(x[0]) + 2.0 * np.cos(x[2]),
         0.0 * np.sin(x[1]) + 0.3 * np.cos(x[0])]
    )
    assert np.allclose(entry.field.eval(x), expected, atol=1e-15)
    assert entry.params["A"] == 2.0


def test_catalog_params_reports_defaults():
    params = catalog_params("conjugated_torus")
    assert params["omega1"] == 1.0
    assert params["omega2"] == pytest.approx(np.sqrt(2.0))
    assert "delta" in params and "sigma" in params


def test_conjugated_torus_rejects_large_sigma():
    with pytest.raises(ValueError):
        catalog("conjugated_torus", sigma=1.0)


def test_conjugated_torus_density_and_gradient():
    """rho = 1/s with s = 1 + sigma sin(phi + 2 psi); gradient by differences."""
    entry = catalog("conjugated_torus", sigma=0.25)
    h = 1e-6
    for x in _sample_box(15):
        s = 1.0 + 0.25 * np.sin(x[0] + 2.0 * x[1])
        assert entry.volume.density(x) == pytest.approx(1.0 / s, rel=1e-14)
        g = entry.volume.grad(x)
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            fd = (entry.volume.density(x + e) - entry.volume.density(x - e)) / (2 * h)
            assert g[j] == pytest.approx(fd, abs=5e-9)


def test_cross_gradient_level_sampler_lands_on_level():
    entry = catalog("cross_gradient")
    pts = entry.level_sampler(1.3, 25, seed=7)
    assert pts.shape == (25, 3)
    for p in pts:
        assert entry.integral.eval(p) == pytest.approx(1.3, abs=1e-9)


def test_shear_chart_is_constant():
    entry = catalog("shear_torus")
    z0 = 0.9
    chart = entry.torus_chart(np.sin(z0))  # level c = sin z0
    phi = np.linspace(0, 2 * np.pi, 7)
    psi = np.linspace(0, 2 * np.pi, 7)[:, None]
    assert np.allclose(chart.A(phi, psi), 2.0 + np.cos(z0))
    assert np.allclose(chart.B(phi, psi), 1.0)
    assert np.allclose(chart.a(phi, psi), 1.0 / np.cos(z0))


def test_shear_chart_rejects_levels_outside_range():
    entry = catalog("shear_torus")
    with pytest.raises(ValueError):
        entry.torus_chart(1.5)


def test_torus_domain_wrap():
    d = Domain("torus", (2 * np.pi,) * 3)
    x = np.array([7.0, -1.0, 13.0])
    w = d.wrap(x)
    assert np.all(w >= 0.0) and np.all(w < 2 * np.pi)
    assert np.allclose((w - x) / (2 * np.pi), np.round((w - x) / (2 * np.pi)))


def test_constant_field_has_zero_jacobian():
    f = constant_field(np.array([0.0, 1.0, 2.0]))
    x = np.array([0.3, 0.3, 0.3])
    assert np.allclose(f.eval(x), [0.0, 1.0, 2.0])
    assert np.allclose(f.jacobian(x), 0.0)


def test_linear_field_requires_zero_trace():
    with pytest.raises(ValueError):
        catalog("linear_trace_free", matrix=((1.0, 0, 0), (0, 1.0, 0), (0, 0, 1.0)))


def test_sample_points_are_deterministic():
    e1 = catalog("abc")
    e2 = catalog("abc")
    assert np.array_equal(e1.sample_points(10, seed=3), e2.sample_points(10, seed=3))
    assert not np.array_equal(e1.sample_points(10, seed=3), e1.sample_points(10, seed=4))
