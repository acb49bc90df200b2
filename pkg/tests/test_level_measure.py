"""Level measure: normalization, frozen values, invariance, bracket tangency."""

import json

import numpy as np
import pytest

from solenoid import catalog
from solenoid.fields import ScalarIntegral, VolumeForm
from solenoid.level_measure import (
    NonTangent,
    OffLevel,
    SingularGradient,
    bracket_tangency_defect,
    invariance_residual,
    lie_bracket_fd,
    liouville_check,
    normal_field,
    omega_n_eval,
    tangent_basis,
)


def _linear_integral(coeffs):
    c = np.asarray(coeffs, dtype=float)
    return ScalarIntegral(
        name="linear",
        eval_fn=lambda x: float(np.dot(c, x)),
        grad_fn=lambda x: c.copy(),
        hess_fn=lambda x: np.zeros((3, 3)),
    )


def test_normal_field_normalization_everywhere():
    entry = catalog("cross_gradient")
    rng = np.random.default_rng(8)
    for _ in range(30):
        x = rng.uniform(-2, 2, 3)
        try:
            n = normal_field(entry.integral, x)
        except SingularGradient:
            continue
        assert float(np.dot(entry.integral.gradient(x), n)) == pytest.approx(1.0, abs=1e-13)


def test_normal_field_with_anisotropic_metric():
    """g = diag(1, 1, 4) tilts n but keeps dF(n) = 1; for F = z the
    orthogonal representative stays (0, 0, 1)."""
    F = _linear_integral([0.0, 0.0, 1.0])
    n = normal_field(F, np.zeros(3), metric=np.diag([1.0, 1.0, 4.0]))
    assert np.allclose(n, [0.0, 0.0, 1.0], atol=1e-15)
    # an off-axis gradient does move under the metric
    F2 = _linear_integral([1.0, 0.0, 1.0])
    n2 = normal_field(F2, np.zeros(3), metric=np.diag([1.0, 1.0, 4.0]))
    assert float(np.dot([1.0, 0.0, 1.0], n2)) == pytest.approx(1.0, abs=1e-14)
    assert not np.allclose(n2, normal_field(F2, np.zeros(3)))


def test_normal_field_singular_gradient():
    F = ScalarIntegral(
        "quad", lambda x: float(x @ x), lambda x: 2.0 * np.asarray(x, float),
        lambda x: 2.0 * np.eye(3),
    )
    with pytest.raises(SingularGradient):
        normal_field(F, np.zeros(3))


def test_omega_n_frozen_value():
    """F = 2z, rho = 1: beta(e1, e2) = det[n e1 e2] with n = (0, 0, 1/2)."""
    F = _linear_integral([0.0, 0.0, 2.0])
    val = omega_n_eval(F, VolumeForm.unit(), np.zeros(3),
                       np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    assert val == pytest.approx(0.5, abs=1e-15)


def test_omega_n_is_independent_of_transversal_choice():
    """Shearing n by a tangent vector leaves beta on tangent pairs alone."""
    entry = catalog("cross_gradient")
    rng = np.random.default_rng(21)
    for _ in range(10):
        x = rng.uniform(0.3, 2.0, 3)
        U = tangent_basis(entry.integral, x)
        base = omega_n_eval(entry.integral, entry.volume, x, U[:, 0], U[:, 1])
        # metric changes the concrete n but must not change the measure
        n_metric = normal_field(entry.integral, x, metric=np.diag([2.0, 1.0, 0.5]))
        tri = np.column_stack([n_metric, U[:, 0], U[:, 1]])
        alt = entry.volume.density(x) * np.linalg.det(tri)
        assert alt == pytest.approx(base, rel=1e-12)


def test_omega_n_rejects_non_tangent_vectors():
    F = _linear_integral([0.0, 0.0, 1.0])
    with pytest.raises(NonTangent):
        omega_n_eval(F, VolumeForm.unit(), np.zeros(3),
                     np.array([0.0, 0.4, 1.0]), np.array([0.0, 1.0, 0.0]))


def test_omega_n_rejects_off_level_points():
    F = _linear_integral([0.0, 0.0, 1.0])
    with pytest.raises(OffLevel):
        omega_n_eval(F, VolumeForm.unit(), np.array([0.0, 0.0, 0.3]),
                     np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]),
                     level=0.0)


def test_tangent_basis_spans_kernel():
    entry = catalog("cross_gradient")
    rng = np.random.default_rng(4)
    for _ in range(20):
        x = rng.uniform(0.2, 2.0, 3)
        U = tangent_basis(entry.integral, x)
        g = entry.integral.gradient(x)
        assert np.max(np.abs(U.T @ g)) < 1e-12 * np.linalg.norm(g)
        assert np.max(np.abs(U.T @ U - np.eye(2))) < 1e-12


def test_lie_bracket_matches_analytic_for_linear_fields():
    """[Ax, Bx] = (BA - AB)x exactly; FD bracket is O(h^2) close."""
    A = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    B = np.array([[0.2, 0.0, 0.5], [0.0, -0.2, 0.0], [0.3, 0.0, 0.0]])
    x = np.array([0.7, -0.4, 1.1])
    got = lie_bracket_fd(lambda p: A @ p, lambda p: B @ p, x)
    want = (B @ A - A @ B) @ x
    assert np.max(np.abs(got - want)) < 1e-9


def test_invariance_and_bracket_on_cross_gradient_level():
    entry = catalog("cross_gradient")
    pts = entry.level_sampler(1.1, 12, seed=5)
    for p in pts:
        U = tangent_basis(entry.integral, p)
        res = invariance_residual(entry.field, entry.integral, entry.volume,
                                  p, U[:, 0], U[:, 1], t=1.0)
        assert res < 1e-9
        assert bracket_tangency_defect(entry.field, entry.integral, p) < 1e-7


def test_liouville_check_report_shape_and_json():
    entry = catalog("cross_gradient")
    pts = np.vstack([entry.level_sampler(0.9, 6, seed=2), np.zeros((1, 3))])
    report = liouville_check(entry.field, entry.integral, entry.volume, pts,
                             t=0.8, level=0.9)
    # the origin has a singular gradient and sits off-level; it must be excluded
    assert report["checked"] == 6
    assert report["excluded"] == 1
    assert report["excluded_points"][0]["index"] == 6
    assert report["max_invariance_residual"] < 1e-9
    assert report["max_normalization_defect"] < 1e-12
    assert report["max_bracket_defect"] < 1e-7
    json.dumps(report)  # must round-trip to JSON untouched


def test_liouville_check_shear_field():
    """F = sin z levels of the shear flow: beta is exactly invariant."""
    entry = catalog("shear_torus")
    rng = np.random.default_rng(9)
    z0 = 0.8
    pts = np.column_stack([
        rng.uniform(0, 2 * np.pi, 8),
        rng.uniform(0, 2 * np.pi, 8),
        np.full(8, z0),
    ])
    report = liouville_check(entry.field, entry.integral, entry.volume, pts,
                             t=2.0, level=np.sin(z0))
    assert report["excluded"] == 0
    assert report["max_invariance_residual"] < 1e-9
