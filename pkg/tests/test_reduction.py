import numpy as np
import pytest
from scipy.integrate import quad

from cliffordch._numerics import fit_slope, fit_slope_robust
from cliffordch.acceptance import EPS_SOLVE, _solves
from cliffordch.fermi import FermiGrid
from cliffordch.geometry import CLIFFORD, CircleField, surface_integral
from cliffordch.phasefield import assemble_vtilde, build_cutoffs
from cliffordch.profile import DoubleWell
from cliffordch.reduction import (
    apply_inner, assemble_inner, evaluate_R, interior_volume,
    interior_volume_quadrature, mass_defect, profile_tail_integral, project_out,
    projection_terms, solve_inner, volume_residual,
)

W = DoubleWell.quartic()


@pytest.fixture(scope="module")
def op():
    return assemble_inner(0.05, M=32, h=0.05)


def _even_field(op, seed=3):
    rng = np.random.default_rng(seed)
    th = 2 * np.pi * np.arange(op.M) / op.M
    t = op.t
    f = np.zeros((op.M, op.K))
    for k in range(4):
        a, b = rng.normal(size=2)
        f += np.cos(k * th)[:, None] * ((a + b * t) * np.exp(-t**2 / (1 + k)))[None, :]
    return f


# ---------------------------------------------------------------- inner operator

def test_t_spectrum_of_quartic_well(op):
    mu = op.t_spectrum(2)
    assert abs(mu[0]) < 1e-6
    assert mu[1] == pytest.approx(1.5, abs=1e-4)


def test_kernel_is_profile_derivative(op):
    rep = op.kernel_report()
    assert rep["near_zero_count"] == 1
    assert rep["kernel_cosine"] >= 0.9999
    assert rep["second_eigenvalue"] >= rep["eps2_lam1"] * (1 - 0.05)


def test_zero_data_gives_zero(op):
    U, info = solve_inner(op, np.zeros((op.M, op.K)))
    assert np.all(U == 0)


@pytest.mark.parametrize("squared", [False, True])
def test_manufactured_round_trip(op, squared):
    U0 = project_out(op, _even_field(op))
    f = apply_inner(op, U0)
    if squared:
        f = apply_inner(op, f)
    f = project_out(op, f)
    U, info = solve_inner(op, f, squared=squared)
    assert np.max(np.abs(U - U0)) <= 1e-7 * np.max(np.abs(U0))
    assert info["orthogonality"] <= 1e-10


def test_parity_is_preserved(op):
    f = project_out(op, _even_field(op))
    odd = 0.5 * (f - f[:, ::-1])
    even = 0.5 * (f + f[:, ::-1])
    Uo, _ = solve_inner(op, odd)
    Ue, _ = solve_inner(op, project_out(op, even))
    assert np.max(np.abs(Uo + Uo[:, ::-1])) <= 1e-10 * np.max(np.abs(Uo))
    assert np.max(np.abs(Ue - Ue[:, ::-1])) <= 1e-10 * np.max(np.abs(Ue))


def test_tensor_law_matches_apply():
    small = assemble_inner(0.1, M=8, h=0.2, half_width=4.0)
    A = small.tensor_matrix()
    ev = np.sort(np.linalg.eigvalsh(A))
    expect = np.sort(small.eigenvalues(t_count=small.K).ravel())
    assert np.max(np.abs(ev - expect)) <= 1e-9 * max(1.0, np.max(np.abs(ev)))


def test_rejects_odd_theta_and_kernel_overlap(op):
    th = 2 * np.pi * np.arange(op.M) / op.M
    bad = np.sin(th)[:, None] * np.exp(-op.t**2)[None, :]
    with pytest.raises(ValueError):
        solve_inner(op, bad)
    with pytest.raises(ValueError):
        solve_inner(op, np.tile(op.kernel, (op.M, 1)))


# ---------------------------------------------------------------- R and projections

def test_R_vanishes_on_zero():
    g = FermiGrid.build(0.05)
    vt = assemble_vtilde(g, W)
    assert np.max(np.abs(evaluate_R(g, vt, np.zeros((g.M, g.K)), W))) == 0.0


def _sample_U(g, eps):
    th, t = g.theta[:, None], g.t[None, :]
    return eps**3 * (1 + 0.5 * np.cos(th)) * (1 - t**2) * np.exp(-t**2 / 2)


def test_R_is_small_relative_to_U():
    E = [0.1, 0.07, 0.05, 0.035]
    ratios, p4s = [], []
    for e in E:
        g = FermiGrid.build(e)
        vt = assemble_vtilde(g, W)
        U = _sample_U(g, e)
        R = evaluate_R(g, vt, U, W)
        ratios.append(np.max(np.abs(R)) / np.max(np.abs(U)))
        _, p4, _, _ = projection_terms(g, vt, U, W, build_cutoffs(e, g.tau))
        p4s.append(p4.sup())
    assert fit_slope(E, ratios) >= 0.9
    # even U of size eps^3: the projection picks up two more powers
    assert fit_slope_robust(E, p4s)[0] >= 4.7


# ---------------------------------------------------------------- volume

def test_volume_of_unperturbed_torus():
    for eps in (0.1, 0.05):
        phi = CircleField.constant(0.0, 32)
        assert interior_volume(eps, phi) == pytest.approx(2 * np.sqrt(2) * np.pi**2 / eps**3,
                                                          rel=1e-14)


def test_volume_linear_term():
    eps, c = 0.05, 1e-6
    phi = CircleField.constant(c, 32)
    dv = interior_volume(eps, phi) - interior_volume(eps, CircleField.constant(0.0, 32))
    assert dv == pytest.approx(c * CLIFFORD.area / eps**2, rel=1e-4)


def test_volume_matches_brute_force():
    eps = 0.2
    phi = CircleField.from_function(lambda th: 0.3 * np.cos(th) - 0.1, 32)
    a = interior_volume(eps, phi)
    b = interior_volume_quadrature(eps, phi)
    assert abs(a - b) <= 1e-6 * abs(a)


def test_profile_tail_integral():
    assert profile_tail_integral(W) == pytest.approx(np.pi**2 / 12, rel=1e-10)


def test_mass_defect_leading_order():
    out = []
    for eps in (0.1, 0.05):
        phi = CircleField.from_function(lambda th: eps * (np.cos(th) - 0.8), 64)
        md = mass_defect(eps, phi)
        assert abs(md["G"]) <= 10.0
        out.append(eps**3 * md["direct"])
    for v in out:
        assert v == pytest.approx(4 * np.sqrt(2) * np.pi**2, rel=0.1)
    # closer at the smaller eps
    assert abs(out[1] - 4 * np.sqrt(2) * np.pi**2) < abs(out[0] - 4 * np.sqrt(2) * np.pi**2)


def test_volume_residual_balance():
    eps = 0.05
    I = profile_tail_integral(W, 6.0 + 1.0 / (2 * eps) * float(FermiGrid.build(eps).tau))
    c = -4 * np.sqrt(2) * np.pi**2 * eps * I / CLIFFORD.area
    phi = CircleField.constant(c, 32)
    assert volume_residual(eps, phi, G=0.7) == pytest.approx(eps**2 * 0.7, abs=1e-12)


def test_volume_residual_at_zero_and_affine():
    eps = 0.05
    r0 = volume_residual(eps, CircleField.constant(0.0, 32))
    assert r0 > 0
    # quartic well: 1 - v* = 2 / (1 + exp(sqrt2 t)), integrated up to the band edge
    upper = 6.0 + FermiGrid.build(eps).tau / (2 * eps)
    I = quad(lambda t: 2 * t / (1 + np.exp(np.sqrt(2) * t)), 0.0, upper, epsabs=1e-14)[0]
    assert r0 == pytest.approx(4 * np.sqrt(2) * np.pi**2 * eps * I, rel=1e-10)
    assert r0 < 4 * np.sqrt(2) * np.pi**2 * eps * np.pi**2 / 12
    r1 = volume_residual(eps, CircleField.constant(1e-3, 32))
    assert (r1 - r0) / 1e-3 == pytest.approx(CLIFFORD.area, rel=1e-10)


# ---------------------------------------------------------------- reduced solve

@pytest.fixture(scope="module")
def solves(shared_ctx):
    return _solves(shared_ctx)


def test_bifurcation_converges(solves):
    for eps in EPS_SOLVE:
        s = solves[eps]
        assert s.converged
        assert abs(s.diagnostics["vol_residual"]) <= 1e-8


def test_bifurcation_amplitude_scales_with_eps(solves):
    r = [solves[e].summary()["phi_sup_over_eps"] for e in EPS_SOLVE]
    assert max(r) / min(r) <= 2.0


def test_bifurcation_phi_even(solves):
    for s in solves.values():
        p = s.phi.values
        assert np.max(np.abs(p - np.roll(p[::-1], 1))) <= 1e-12


def test_bifurcation_contracts(solves):
    for eps in EPS_SOLVE:
        if eps > 0.07 + 1e-12:
            continue
        u = [rec["update_norm"] for rec in solves[eps].trace]
        tail = [b / a for a, b in zip(u[2:], u[3:]) if a > 1e-13]
        assert tail and max(tail) <= 0.5


def test_multiplier_vanishes(solves):
    lam = [abs(solves[e].lam) for e in EPS_SOLVE]
    assert fit_slope(EPS_SOLVE, lam) >= 1.0


def test_bifurcation_rejects_large_eps():
    from cliffordch.reduction import solve_bifurcation
    with pytest.raises(ValueError):
        solve_bifurcation(0.2)
