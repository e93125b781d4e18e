import numpy as np
import pytest

from cliffordch.geometry import (CLIFFORD, CircleField, TorusShape, a1_route, covariant_forms,
                                 geometry_field, jet, laplace_beltrami, surface_integral,
                                 willmore_residual)

SQ2 = np.sqrt(2.0)
rng = np.random.default_rng(7)


def _embedding(shape, th):
    return np.stack([shape.R + shape.r * np.cos(th), shape.r * np.sin(th)], -1)


def test_clifford_anchor_values():
    J = jet(CLIFFORD, 0.0)
    assert float(J.H) == pytest.approx(-SQ2, abs=1e-14)
    assert float(J.absA2) == pytest.approx(4 - 2 * SQ2, abs=1e-14)
    J = jet(CLIFFORD, np.pi / 2)
    assert float(J.k2) == pytest.approx(0.0, abs=1e-15)
    assert float(J.H) == pytest.approx(-1.0)
    assert float(J.K) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("shape", [CLIFFORD, TorusShape(1.8, 1.0)])
def test_two_curvature_identity_and_parity(shape):
    th = rng.uniform(0, 2 * np.pi, 32)
    J, Jm = jet(shape, th), jet(shape, -th)
    assert np.allclose(J.H**2 - J.absA2 - 2 * J.K, 0.0, atol=1e-13)
    assert np.allclose(J.H, Jm.H) and np.allclose(J.dH, -Jm.dH)


def test_jet_against_finite_differences():
    th = rng.uniform(0, 2 * np.pi, 32)
    h = 1e-3
    w = np.array([1, -8, 0, 8, -1]) / (12 * h)
    w2 = np.array([-1, 16, -30, 16, -1]) / (12 * h * h)
    H = np.array([jet(CLIFFORD, th + k * h).H for k in range(-2, 3)])
    J = jet(CLIFFORD, th)
    assert np.max(np.abs(w @ H - J.dH)) <= 1e-8
    assert np.max(np.abs(w2 @ H - J.d2H)) <= 1e-6
    # metric from the meridian curve and the rotation radius
    Y = np.array([_embedding(CLIFFORD, th + k * h) for k in range(-2, 3)])
    dY = np.einsum("k,kij->ij", w, Y)
    assert np.max(np.abs((dY**2).sum(-1) - J.g[:, 0, 0])) <= 1e-8
    assert np.max(np.abs(_embedding(CLIFFORD, th)[:, 0] ** 2 - J.g[:, 1, 1])) <= 1e-12


def test_field_basics():
    f = CircleField.from_function(lambda t: 1 + np.cos(t) + 0.3 * np.cos(3 * t), 32, symmetric=True)
    a, _ = f.coefficients()
    assert np.allclose(a[:4], [1, 1, 0, 0.3], atol=1e-14)
    assert f.energy() == pytest.approx(a[0] ** 2 + 0.5 * np.sum(a[1:] ** 2), rel=1e-14)
    assert np.allclose(f.evaluate(np.array([0.3])), f.evaluate(np.array([-0.3])))
    assert np.allclose(f.resample(64).resample(32).values, f.values, atol=1e-14)
    assert f.derivative().symmetric is False


def test_laplace_beltrami():
    H = geometry_field(CLIFFORD, 64, "H")
    assert laplace_beltrami(CLIFFORD, H).values[0] == pytest.approx(3 * SQ2 - 4, abs=1e-8)
    assert laplace_beltrami(CLIFFORD, CircleField.constant(2.0, 64)).sup() <= 1e-13
    for shape in (CLIFFORD, TorusShape(1.8, 1.0)):
        f = CircleField.from_function(lambda t: np.exp(np.cos(t)) + np.sin(2 * t), 64)
        assert abs(surface_integral(shape, laplace_beltrami(shape, f))) <= 1e-10


def test_laplace_beltrami_self_adjoint():
    f = CircleField.from_function(lambda t: np.cos(t) + 0.2 * np.sin(3 * t), 64)
    g = CircleField.from_function(lambda t: np.sin(t) ** 2 + 0.1 * np.cos(5 * t), 64)
    lhs = surface_integral(CLIFFORD, laplace_beltrami(CLIFFORD, f) * g)
    rhs = surface_integral(CLIFFORD, f * laplace_beltrami(CLIFFORD, g))
    assert abs(lhs - rhs) <= 1e-10


def test_covariant_forms():
    c = CircleField.constant(1.0, 64)
    for v in covariant_forms(CLIFFORD, c, c).values():
        assert v.sup() <= 1e-13
    cos = CircleField.from_function(np.cos, 64, symmetric=True)
    gd = covariant_forms(CLIFFORD, cos, cos)["grad_dot"]
    assert np.max(np.abs(gd.values - np.sin(cos.theta) ** 2)) <= 1e-12


def test_a1_route_matches_covariant_route():
    local = np.random.default_rng(11)
    for _ in range(5):
        a = local.normal(size=5)
        psi = CircleField.from_cosines(a, 64)
        psi = psi / psi.sup()
        H = geometry_field(CLIFFORD, 64, "H")
        cf = covariant_forms(CLIFFORD, psi, H)
        direct = 2 * cf["A_hess"] + cf["grad_dot"]
        assert np.max(np.abs(a1_route(CLIFFORD, psi).values - direct.values)) <= 1e-10


def test_willmore_residual():
    assert willmore_residual(CLIFFORD, 64).sup() <= 1e-8
    control = willmore_residual(TorusShape(1.8, 1.0), 64)
    assert control.sup() >= 1e-2
    assert np.allclose(control.values, control.reflect().values, atol=1e-13)
    J = jet(CLIFFORD, 0.0)
    assert 0.5 * float(J.H * (J.H**2 - 2 * J.absA2)) == pytest.approx(3 * SQ2 - 4, abs=1e-12)


def test_surface_integrals():
    one = CircleField.constant(1.0, 64)
    assert surface_integral(CLIFFORD, one) == pytest.approx(4 * SQ2 * np.pi**2, abs=1e-10)
    assert CLIFFORD.area == pytest.approx(4 * SQ2 * np.pi**2, abs=1e-10)
    sin = CircleField.from_function(np.sin, 64)
    assert abs(surface_integral(CLIFFORD, sin)) <= 1e-12
    cos = CircleField.from_function(np.cos, 64, symmetric=True)
    assert surface_integral(CLIFFORD, cos) == pytest.approx(2 * np.pi**2, abs=1e-10)


def test_scaling_of_mean_curvature():
    eps = 0.1
    big = TorusShape(CLIFFORD.R / eps, CLIFFORD.r / eps)
    th = np.linspace(0, 2 * np.pi, 9)
    assert np.allclose(jet(big, th).H, eps * jet(CLIFFORD, th).H, atol=1e-14)
