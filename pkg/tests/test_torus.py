"""Rotation numbers: exact ratios, estimator agreement, measure diagnostics."""

import math

import numpy as np
import pytest

from solenoid import advance, catalog
from solenoid.fields import TorusChartData
from solenoid.torus import (
    NoChartAvailable,
    TorusFlow,
    measure_pde_residual,
    partial_quotients,
    rotation_birkhoff,
    rotation_quadrature,
    torus_from_level,
)

SQRT2 = math.sqrt(2.0)


def test_quadrature_hits_exact_irrational_ratio():
    entry = catalog("conjugated_torus")
    est = rotation_quadrature(entry.torus_chart(0.0), n=64)
    assert not est.degenerate
    assert est.pde_residual < 1e-12
    assert abs(est.ratio - 1.0 / SQRT2) < 1e-12


def test_quadrature_ratio_independent_of_level():
    entry = catalog("conjugated_torus")
    r0 = rotation_quadrature(entry.torus_chart(0.0), n=64).ratio
    r1 = rotation_quadrature(entry.torus_chart(0.6), n=64).ratio
    # raw rates differ (the chart density scales with the level) ...
    l0 = rotation_quadrature(entry.torus_chart(0.0), n=64).lambda1
    l1 = rotation_quadrature(entry.torus_chart(0.6), n=64).lambda1
    assert abs(l0 - l1) > 1e-3
    # ... the ratio does not
    assert r0 == pytest.approx(r1, abs=1e-13)


def test_rational_shear_ratio_and_quotients():
    entry = catalog("shear_torus", a0=1.0, a1=0.0, b0=2.0, b1=0.0)
    est = rotation_quadrature(entry.torus_chart(0.3), n=32)
    assert est.ratio == pytest.approx(0.5, abs=1e-14)
    assert partial_quotients(est.ratio) == [0, 2]


def test_partial_quotients_of_sqrt2_tail():
    got = partial_quotients(1.0 / SQRT2, depth=10)
    assert got[:6] == [0, 1, 2, 2, 2, 2]
    with pytest.raises(ValueError):
        partial_quotients(math.inf)


def test_birkhoff_agrees_and_converges_like_one_over_T():
    entry = catalog("conjugated_torus")
    chart = entry.torus_chart(0.0)
    exact = 1.0 / SQRT2
    errs = []
    horizons = [50.0, 100.0, 200.0, 400.0]
    for T in horizons:
        est = rotation_birkhoff(chart, horizon=T)
        assert not est.degenerate
        errs.append(abs(est.ratio - exact) + 1e-16)
    slope = np.polyfit(np.log(horizons), np.log(errs), 1)[0]
    assert slope < -0.8
    # the half-horizon comparison brackets the actual error scale
    est = rotation_birkhoff(chart, horizon=400.0)
    assert est.error_estimate > abs(est.ratio - exact) / 50.0


def test_reparameterization_leaves_ratio_alone():
    """Doubling the speed (and halving the density) is the same torus."""
    entry = catalog("conjugated_torus")
    base = entry.torus_chart(0.0)
    fast = TorusChartData(
        A=lambda p, q: 2.0 * np.asarray(base.A(p, q)),
        B=lambda p, q: 2.0 * np.asarray(base.B(p, q)),
        a=lambda p, q: 0.5 * np.asarray(base.a(p, q)),
        kernel=None,
    )
    r_base = rotation_quadrature(base, n=64)
    r_fast = rotation_quadrature(fast, n=64)
    assert r_fast.pde_residual < 1e-12
    assert r_fast.lambda1 == pytest.approx(r_base.lambda1, rel=1e-13)
    assert r_fast.ratio == pytest.approx(r_base.ratio, abs=1e-13)
    rb = rotation_birkhoff(fast, horizon=200.0)
    assert abs(rb.ratio - r_base.ratio) < 1e-2


def test_axis_swap_inverts_ratio():
    """Relabeling (phi, psi) -> (psi, phi) carries the density along and
    inverts the ratio."""
    entry = catalog("conjugated_torus")
    base = entry.torus_chart(0.0)
    swapped = TorusChartData(
        A=lambda p, q: np.asarray(base.B(q, p)),
        B=lambda p, q: np.asarray(base.A(q, p)),
        a=lambda p, q: np.asarray(base.a(q, p)),
        kernel=None,
    )
    est = rotation_quadrature(swapped, n=64)
    assert est.pde_residual < 1e-12
    assert est.ratio == pytest.approx(SQRT2, abs=1e-12)


def test_pde_residual_catches_wrong_density():
    """A = sin(phi), B = 0, a = 1: the defect is cos(phi), max exactly 1."""
    chart = TorusChartData(
        A=lambda p, q: np.sin(p),
        B=lambda p, q: np.zeros(np.broadcast(p, q).shape),
        a=lambda p, q: np.ones(np.broadcast(p, q).shape),
        kernel=None,
    )
    assert measure_pde_residual(chart, n=64) == pytest.approx(1.0, abs=1e-12)
    with pytest.warns(UserWarning, match="not invariant"):
        rotation_quadrature(chart, n=64)


def test_degenerate_denominator_flag():
    chart = TorusChartData(
        A=lambda p, q: np.ones(np.broadcast(p, q).shape),
        B=lambda p, q: np.zeros(np.broadcast(p, q).shape),
        a=lambda p, q: np.ones(np.broadcast(p, q).shape),
        kernel=None,
    )
    est = rotation_quadrature(chart, n=32)
    assert est.degenerate and math.isnan(est.ratio)
    estb = rotation_birkhoff(chart, horizon=50.0)
    assert estb.degenerate and math.isnan(estb.ratio)


def test_torus_from_level_requires_chart():
    with pytest.raises(NoChartAvailable):
        torus_from_level(catalog("cross_gradient"), 1.0)


def test_chart_flow_matches_ambient_flow():
    """The 2-D chart orbit is the (phi, psi) shadow of the 3-D orbit."""
    entry = catalog("conjugated_torus")
    tf = torus_from_level(entry, 0.0)
    q0 = np.array([0.25, 1.4])
    t = 7.0
    q_end = tf.advance(q0, t)
    amb = advance(entry.field, np.array([q0[0], q0[1], 0.0]), t,
                  with_monodromy=False)
    assert np.max(np.abs(q_end - amb.x[:2])) < 1e-9
    assert np.allclose(tf.velocity(q0), entry.field.eval([q0[0], q0[1], 0.0])[:2])
