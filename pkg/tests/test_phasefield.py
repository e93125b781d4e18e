import numpy as np
import pytest

from cliffordch._numerics import fit_slope
from cliffordch.fermi import FermiGrid
from cliffordch.geometry import CLIFFORD, CircleField, jet
from cliffordch.phasefield import (assemble_global_v, assemble_vtilde, build_cutoffs, bump,
                                   evaluate_F, evaluate_Fprime, evaluate_Gamma, project_residual,
                                   quadratic_part, resolution_check)
from cliffordch.profile import DoubleWell
from cliffordch.willmore_op import apply_ltilde

SQ2 = np.sqrt(2.0)
W = DoubleWell.quartic()


@pytest.fixture(scope="module")
def grid05():
    return FermiGrid.build(0.05)


def test_bump_shape_and_derivatives():
    s = np.linspace(0.0, 3.0, 3001)
    z = bump(s)
    assert np.all(z[0][s <= 1] == 1.0) and np.all(z[0][s >= 2] == 0.0)
    assert np.all((z[0] >= 0) & (z[0] <= 1))
    errs = []
    for n in (1001, 2001):
        x = np.linspace(0.5, 2.5, n)
        h = x[1] - x[0]
        zz = bump(x)
        errs.append(max(np.max(np.abs(np.gradient(zz[k], h) - zz[k + 1])[5:-5]) for k in range(4)))
    # second-order differences: halving h cuts the error by about 4
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_cutoff_support():
    cut = build_cutoffs(0.05, 0.3)
    w = cut.inner_width
    for m in (1, 2, 4, 5):
        assert cut.chi(m, 0.0) == 1.0
        assert cut.chi(m, w + m + 1.0) == 1.0
        assert cut.chi(m, w + m + 2.0) == 0.0 and cut.chi(m, -(w + m + 2.0)) == 0.0
        assert 0.0 < cut.chi(m, w + m + 1.5) < 1.0
    t = np.linspace(-20, 20, 4001)
    assert np.array_equal(cut.chi(2, t) * cut.chi(1, t), cut.chi(1, t))
    with pytest.raises(ValueError):
        build_cutoffs(0.05, 0.5)


def test_vtilde_at_phi_zero(grid05):
    vt = assemble_vtilde(grid05, W)
    J = jet(CLIFFORD, grid05.theta)
    coeff = J.H**2 - 2 * J.absA2
    expect = vt.profile.v[None, :] + 0.05**2 * coeff[:, None] * vt.profile.eta[None, :]
    assert np.max(np.abs(vt.values - expect)) <= 1e-13
    bound = 0.05**2 * np.abs(coeff).max() * np.abs(vt.profile.eta).max()
    assert np.max(np.abs(vt.values - vt.base)) <= bound * (1 + 1e-10)
    assert np.all(vt.values[:, grid05.K // 2] == 0.0)


def test_global_v(grid05):
    cut = build_cutoffs(0.05, grid05.tau)
    vt = assemble_vtilde(grid05, W)
    v, outer = assemble_global_v(grid05, cut, vt)
    assert np.all(v.values[:, grid05.K // 2] == 0.0)
    far = np.abs(grid05.t) >= cut.inner_width + 7
    assert np.all(np.abs(v.values[:, far]) == 1.0) and np.all(outer[:, far])
    tail = np.exp(-W.decay_rate * (cut.inner_width + 5))
    assert np.max(np.abs(v.values - vt.values)) <= 4 * tail


def test_F_vanishes_on_constant_state(grid05):
    assert evaluate_F(grid05, np.ones((grid05.M, grid05.K)), W).sup() == 0.0


def test_F_orders():
    eps_list = [0.1, 0.07, 0.05, 0.035]
    n0, n1 = [], []
    for e in eps_list:
        g = FermiGrid.build(e)
        vt = assemble_vtilde(g, W)
        inner = np.abs(g.t) <= build_cutoffs(e, g.tau).inner_width
        n0.append(np.abs(evaluate_F(g, vt.base, W).values[:, inner]).max())
        n1.append(np.abs(evaluate_F(g, vt, W).values[:, inner]).max())
    assert fit_slope(eps_list, n0) == pytest.approx(2.0, abs=0.3)
    # the eta correction removes the eps^2 term
    assert fit_slope(eps_list, n1) > 2.9
    assert all(b < a for a, b in zip(n1, n1[1:]))


def test_Fprime_finite_difference_slope():
    g = FermiGrid.build(0.1)
    th, t = g.theta[:, None], g.t[None, :]
    u = assemble_vtilde(g, W).values
    v = np.exp(-t**2) * (1 + 0.3 * np.cos(th))
    assert evaluate_Fprime(g, u, np.zeros_like(u), W).sup() == 0.0
    F0 = evaluate_F(g, u, W).values
    J = evaluate_Fprime(g, u, v, W).values
    hs = [1e-2, 5e-3, 2.5e-3, 1.25e-3]
    errs = [np.abs(evaluate_F(g, u + h * v, W).values - F0 - h * J).max() for h in hs]
    assert fit_slope(hs, errs) == pytest.approx(2.0, abs=0.1)


def test_taylor_closure():
    g = FermiGrid.build(0.1)
    th, t = g.theta[:, None], g.t[None, :]
    u = assemble_vtilde(g, W).values
    base = np.exp(-t**2) * np.cos(th)
    F0 = evaluate_F(g, u, W).values
    # W is polynomial, so Gauss-Legendre integrates the Taylor remainder exactly
    # and only roundoff is left
    for a in (0.4, 0.2, 0.1):
        w = a * base
        rem = (evaluate_F(g, u + w, W).values - F0 - evaluate_Fprime(g, u, w, W).values
               - quadratic_part(g, u, w, W).values)
        assert np.abs(rem).max() <= 1e-3 * a**3


def test_gamma(grid05):
    cut = build_cutoffs(0.05, grid05.tau)
    v, _ = assemble_global_v(grid05, cut, assemble_vtilde(grid05, W))
    G, rep = evaluate_Gamma(grid05, cut, v, W)
    assert rep["min"] >= (0.9 * SQ2) ** 2 and rep["ok"]
    near = np.abs(grid05.t) <= cut.inner_width + 1
    far = np.abs(grid05.t) >= cut.inner_width + 7
    assert np.all(G.values[:, near] == 2.0) and np.all(G.values[:, far] == 2.0)


def test_projection_is_even_and_small(grid05):
    q = project_residual(grid05, evaluate_F(grid05, assemble_vtilde(grid05, W), W), W)
    assert np.max(np.abs(q.values - q.reflect().values)) <= 1e-14


def test_projection_over_eps3_tends_to_zero():
    # the eps^3 coefficient is c* times the Willmore residual, which vanishes
    ratio = []
    for e in (0.07, 0.05, 0.035):
        g = FermiGrid.build(e)
        ratio.append(project_residual(g, evaluate_F(g, assemble_vtilde(g, W), W), W).sup() / e**3)
    assert ratio[0] > ratio[1] > ratio[2]
    assert ratio[2] <= 0.5 * ratio[0]


def test_linear_response():
    phi = CircleField.from_function(lambda x: 0.5 * (np.cos(x) - 1 / (2 * SQ2)), 64, symmetric=True)
    Lt = apply_ltilde(CLIFFORD, phi).values
    rel = []
    for e in (0.07, 0.05, 0.035):
        g = FermiGrid.build(e, phi=phi)
        vt = assemble_vtilde(g, W)
        q = project_residual(g, evaluate_F(g, vt, W), W)
        ref = e**4 * vt.profile.c_star * Lt
        rel.append(np.abs(q.values + ref).max() / np.abs(ref).max())
    assert rel[1] <= 0.5
    assert rel[0] > rel[1] > rel[2]


def test_reflection_equivariance(grid05):
    th, t = grid05.theta[:, None], grid05.t[None, :]
    u = np.tanh(t / SQ2) + 0.01 * np.sin(th) * np.exp(-t**2)
    refl = np.r_[0, np.arange(grid05.M - 1, 0, -1)]
    a = evaluate_F(grid05, u, W).values
    b = evaluate_F(grid05, u[refl], W).values
    assert np.max(np.abs(a[refl] - b)) <= 1e-12


def test_resolution(grid05):
    rep = resolution_check(grid05, lambda g: assemble_vtilde(g, W).values, W)
    assert not rep["flagged"]


def test_refinement_stability():
    eps_list = [0.1, 0.07, 0.05, 0.035]
    slopes = []
    for M, h in ((64, 0.05), (128, 0.025)):
        n = []
        for e in eps_list:
            g = FermiGrid.build(e, M=M, h=h)
            inner = np.abs(g.t) <= build_cutoffs(e, g.tau).inner_width
            n.append(np.abs(evaluate_F(g, assemble_vtilde(g, W), W).values[:, inner]).max())
        slopes.append(fit_slope(eps_list, n))
    assert abs(slopes[0] - slopes[1]) <= 0.1
