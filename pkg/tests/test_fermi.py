import numpy as np
import pytest

from cliffordch._numerics import fit_slope
from cliffordch.fermi import (FermiGrid, ambient_laplacian, apply_D, apply_D_exact,
                              expansion_coeffs, fermi_laplacian_exact, focal_distance,
                              metric_expansion_report, parallel_jet, remainder_report)
from cliffordch.geometry import CLIFFORD, CircleField, jet

SQ2 = np.sqrt(2.0)
rng = np.random.default_rng(3)


def test_parallel_jet_reduces_at_zero():
    th = np.linspace(0, 2 * np.pi, 17)
    P, J = parallel_jet(CLIFFORD, th, 0.0), jet(CLIFFORD, th)
    assert np.allclose(P.g_tilde, J.g) and np.allclose(P.H_tilde, J.H)


def test_mean_curvature_value_and_series():
    P = parallel_jet(CLIFFORD, 0.0, 0.1)
    k2 = -(SQ2 - 1)
    exact = -1 / 1.1 + k2 / (1 - 0.1 * k2)
    assert float(P.H_tilde) == pytest.approx(exact, abs=1e-12)
    # sum_j z^(j-1) (k1^j + k2^j) truncated at J = 6
    series = sum(0.1 ** (j - 1) * ((-1.0) ** j + k2**j) for j in range(1, 7))
    assert abs(float(P.H_tilde) - series) <= 2 * 0.1**6


def test_log_det_identity():
    th = rng.uniform(0, 2 * np.pi, 64)
    z = rng.uniform(-0.3, 0.3, 64)
    h = 1e-4
    logdet = lambda zz: np.log(np.linalg.det(parallel_jet(CLIFFORD, th, zz).g_tilde))
    dz = (-logdet(z + 2 * h) + 8 * logdet(z + h) - 8 * logdet(z - h) + logdet(z - 2 * h)) / (12 * h)
    assert np.max(np.abs(0.5 * dz + parallel_jet(CLIFFORD, th, z).H_tilde)) <= 1e-10


def test_expansion_coefficients():
    E = expansion_coeffs(CLIFFORD, 0.0)
    assert float(E.a1[..., 0, 0]) == pytest.approx(-2.0)
    z = 1e-3
    th = np.linspace(0, 2 * np.pi, 33)
    E = expansion_coeffs(CLIFFORD, th)
    b = np.array([parallel_jet(CLIFFORD, th, k * z).b_tilde[:, 0] for k in range(-2, 3)])
    b_fd = np.array([1, -8, 0, 8, -1]) @ b / (12 * z)
    assert np.max(np.abs(b_fd - E.b1[:, 0])) <= 1e-8
    b2_fd = np.array([-1, 16, -30, 16, -1]) @ b / (24 * z * z)
    assert np.max(np.abs(b2_fd - E.b2[:, 0])) <= 1e-6


def test_collar_guard():
    with pytest.raises(ValueError):
        parallel_jet(CLIFFORD, 0.0, focal_distance(CLIFFORD))
    grid = FermiGrid.build(0.1)
    assert grid.T <= 0.95 * focal_distance(CLIFFORD) / 0.1
    with pytest.raises(ValueError):
        FermiGrid.build(0.1, tau=0.5)


def test_t_only_field_reduces_to_one_dimension():
    grid = FermiGrid.build(0.1)
    U = np.broadcast_to(np.tanh(grid.t / SQ2), (grid.M, grid.K)).copy()
    lap = fermi_laplacian_exact(grid, U)
    P = parallel_jet(CLIFFORD, grid.theta[:, None], 0.1 * grid.t[None, :])
    t = grid.t
    v1 = 0.5 * SQ2 / np.cosh(t / SQ2) ** 2
    v2 = -np.tanh(t / SQ2) / np.cosh(t / SQ2) ** 2
    ref = v2[None, :] - 0.1 * P.H_tilde * v1[None, :]
    inner = slice(8, -8)
    assert np.max(np.abs(lap - ref)[:, inner]) <= 1e-8


def _ambient_gap(eps, h_t, h_x=2e-2, M=64):
    grid = FermiGrid.build(eps, M=M, h=h_t)
    th, t = grid.theta[:, None], grid.t[None, :]
    U = lambda a, s: np.exp(-s**2) * np.cos(a)
    lap = fermi_laplacian_exact(grid, U(th, t))
    rows = np.arange(0, grid.M, 8)
    cols = np.flatnonzero(np.abs(grid.t) <= 2.5)[::5]
    TH, TT = np.meshgrid(grid.theta[rows], grid.t[cols], indexing="ij")
    ref = ambient_laplacian(CLIFFORD, eps, U, TH, TT, h=h_x)
    return float(np.max(np.abs(lap[np.ix_(rows, cols)] - ref)))


def test_ambient_oracle_gaussian_bump():
    assert _ambient_gap(0.1, 0.05) <= 1e-5


def test_ambient_oracle_refines():
    # both discretizations are fourth order or better: halving both steps
    # should cut the gap by well over a factor 4
    coarse = _ambient_gap(0.1, 0.1, 8e-2)
    fine = _ambient_gap(0.1, 0.05, 4e-2)
    assert coarse / fine >= 8


def test_linearity_and_reflection():
    phi = CircleField.from_function(lambda x: 0.2 * np.cos(x), 64, symmetric=True)
    grid = FermiGrid.build(0.1, phi=phi)
    th, t = grid.theta[:, None], grid.t[None, :]
    u = np.exp(-t**2) * (1 + np.cos(th))
    w = np.tanh(t) * np.cos(2 * th)
    lhs = fermi_laplacian_exact(grid, 2 * u - 3 * w)
    rhs = 2 * fermi_laplacian_exact(grid, u) - 3 * fermi_laplacian_exact(grid, w)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9
    L = fermi_laplacian_exact(grid, u)
    refl = np.r_[0, np.arange(grid.M - 1, 0, -1)]
    assert np.max(np.abs(L - L[refl])) <= 1e-9


def test_metric_expansion_orders():
    rep = metric_expansion_report()
    # second-order remainder must scale at least like z^3
    assert rep["second_order_slope"] >= 2.9
    rem = remainder_report()
    assert rem["b_bar_slope"] >= 3.0


def test_D_on_profile_and_constants():
    grid = FermiGrid.build(0.1)
    U = np.broadcast_to(np.tanh(grid.t / SQ2), (grid.M, grid.K)).copy()
    P = parallel_jet(CLIFFORD, grid.theta[:, None], 0.1 * grid.t[None, :])
    v1 = 0.5 * SQ2 / np.cosh(grid.t / SQ2) ** 2
    ref = -0.1 * P.H_tilde * v1[None, :]
    inner = slice(8, -8)
    assert np.max(np.abs(apply_D_exact(grid, U) - ref)[:, inner]) <= 1e-8
    assert np.max(np.abs(apply_D(grid, U) - ref)[:, inner]) <= 1e-8
    c = np.full((grid.M, grid.K), 1.7)
    assert np.max(np.abs(apply_D(grid, c))) <= 1e-10


def test_D_remainder_scales_in_eps_z():
    eps_list = [0.1, 0.07, 0.05, 0.035]
    phi = CircleField.from_function(lambda x: 0.3 * np.cos(x), 64, symmetric=True)
    out = []
    for e in eps_list:
        grid = FermiGrid.build(e, phi=phi)
        U = np.tanh(grid.t[None, :] / SQ2) * (1 + 0.2 * np.cos(grid.theta[:, None]))
        d = apply_D_exact(grid, U) - apply_D(grid, U)
        out.append(np.abs(d[:, np.abs(grid.t) <= 2.0]).max() / e**2)
    assert fit_slope(eps_list, out) >= 3.0
