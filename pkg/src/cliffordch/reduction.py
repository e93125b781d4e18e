"""Inner linear solver, projected correction terms, volume and the reduced solve.

The inner operator on the dilated surface times the line is

    Lin U = -Lap_{Sigma_eps} U - U_tt + W''(v*(t)) U,

which separates over Laplace-Beltrami eigenmodes of the unit torus: on mode
``j`` it is the one-dimensional operator ``-d_tt + W''(v*) + eps^2 lam_j``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.linalg as sla
from scipy.integrate import simpson

from .fermi import FermiGrid, _t_deriv, default_tau, surface_laplacian
from .geometry import CLIFFORD, CircleField, surface_integral
from .phasefield import (assemble_global_v, assemble_vtilde, build_cutoffs, correction_field,
                         evaluate_F, profile_on_grid, project_residual, quadratic_part)
from ._numerics import fd_weights
from .profile import DoubleWell, _profile_values, default_half_width, evaluate_profile
from .willmore_op import _even_maps, _lb_matrix, _weights, assemble_ltilde

__all__ = [
    "InnerOperator",
    "assemble_inner",
    "solve_inner",
    "apply_inner",
    "project_out",
    "evaluate_R",
    "projection_terms",
    "interior_volume",
    "interior_volume_quadrature",
    "profile_tail_integral",
    "mass_defect",
    "volume_residual",
    "BifurcationConfig",
    "ReducedState",
    "solve_bifurcation",
]


# ---------------------------------------------------------------- inner operator

@dataclass
class InnerOperator:
    """Tensor discretization over Laplace-Beltrami modes and a uniform t-grid.

    ``t`` extends the Fermi grid (same spacing, centred) far enough for the
    profile tails. ``At`` is the symmetric 1D operator ``-d_tt + W''(v*)``
    with the centred 8th-order stencil truncated at the ends (fields vanish
    there to roundoff). ``kernel`` is ``v*'`` normalized in the ``h``-weighted
    product.
    """

    eps: float
    shape: object
    M: int
    t: np.ndarray
    At: np.ndarray
    kernel: np.ndarray
    lam: np.ndarray
    modes: np.ndarray
    modes_inv: np.ndarray
    well: object
    _lu: dict = field(default_factory=dict, repr=False)

    @property
    def h(self):
        return float(self.t[1] - self.t[0])

    @property
    def K(self):
        return self.t.size

    def t_spectrum(self, count=None):
        ev = sla.eigvalsh(self.At)
        return ev if count is None else ev[:count]

    def eigenvalues(self, t_count=4):
        """Outer sums ``mu_k + eps^2 lam_j`` for the lowest ``t_count`` values of ``mu``."""
        mu = self.t_spectrum(t_count)
        return mu[:, None] + self.eps**2 * self.lam[None, :]

    def tensor_matrix(self):
        """Dense symmetric tensor matrix in orthonormal coordinates (small sizes only)."""
        S, w = _lb_sector(self.shape, self.M)
        s = np.sqrt(w)
        S = 0.5 * ((S * s[:, None] / s[None, :]) + (S * s[:, None] / s[None, :]).T)
        n = S.shape[0]
        return self.eps**2 * np.kron(S, np.eye(self.K)) + np.kron(np.eye(n), self.At)

    def kernel_report(self):
        ev, vec = sla.eigh(self.At)
        v0 = vec[:, 0]
        cosine = abs(v0 @ self.kernel) / (np.linalg.norm(v0) * np.linalg.norm(self.kernel))
        allv = self.eigenvalues(t_count=2)
        near = int(np.sum(np.abs(allv) <= 1e-6))
        rest = np.sort(allv.ravel())[1]
        lam1 = float(self.lam[1])
        return {"mu0": float(ev[0]), "mu1": float(ev[1]), "kernel_cosine": float(cosine),
                "near_zero_count": near, "second_eigenvalue": float(rest),
                "eps2_lam1": float(self.eps**2 * lam1), "lam1": lam1}

    def embed(self, values):
        """Pad a Fermi-grid field (``M x K_f``, same spacing) with zeros."""
        values = np.asarray(values, float)
        kf = values.shape[1]
        off = (self.K - kf) // 2
        if off < 0 or (self.K - kf) % 2:
            raise ValueError("field grid does not nest in the inner grid")
        out = np.zeros((values.shape[0], self.K))
        out[:, off:off + kf] = values
        return out

    def restrict(self, values, kf):
        off = (self.K - kf) // 2
        return np.asarray(values)[:, off:off + kf]

    def _factor(self, j):
        if j not in self._lu:
            n = self.K
            B = np.zeros((n + 1, n + 1))
            B[:n, :n] = self.At + self.eps**2 * self.lam[j] * np.eye(n)
            B[:n, n] = self.kernel
            B[n, :n] = self.h * self.kernel
            self._lu[j] = sla.lu_factor(B)
        return self._lu[j]


def _lb_sector(shape, M):
    """Minus the symmetric-sector Laplace-Beltrami matrix and its weights."""
    E, P = _even_maps(M)
    w = E.T @ _weights(shape, M)
    return -(P @ _lb_matrix(shape, M) @ E), w


def _t_operator(t, well):
    h = t[1] - t[0]
    w = fd_weights(np.arange(-4, 5), 2)
    half = w.size // 2
    col = np.zeros(t.size)
    col[:half + 1] = w[half:]
    D2 = sla.toeplitz(col) / h**2
    v = evaluate_profile(well, t)[0]
    return -D2 + np.diag(well.deriv(v, 2))


def assemble_inner(eps, shape=CLIFFORD, well=None, M=64, h=0.05, half_width=None):
    """Build the inner operator for ``eps`` on ``M`` angular nodes and spacing ``h``."""
    well = DoubleWell.quartic() if well is None else well
    if M % 2:
        raise ValueError("M must be even")
    need = max(default_half_width(well), default_tau() / (2 * eps) + 8.0)
    if half_width is not None:
        need = max(need, float(half_width))
    k = int(np.ceil(need / h))
    t = h * np.arange(-k, k + 1)
    At = _t_operator(t, well)
    vp = evaluate_profile(well, t)[1]
    kern = vp / np.sqrt(h * np.sum(vp**2))
    L, w = _lb_sector(shape, M)
    s = np.sqrt(w)
    S = L * s[:, None] / s[None, :]
    lam, Q = np.linalg.eigh(0.5 * (S + S.T))
    lam[0] = 0.0 if abs(lam[0]) < 1e-9 else lam[0]
    modes = Q / s[:, None]
    modes_inv = Q.T * s[None, :]
    op = InnerOperator(float(eps), shape, M, t, At, kern, lam, modes, modes_inv, well)
    near = op.kernel_report()["near_zero_count"]
    if near != 1:
        raise ArithmeticError(f"spurious kernel multiplicity {near}: refine the grids")
    return op


def _half(values, M):
    return np.asarray(values)[: M // 2 + 1]


def _full(half, M):
    E, _ = _even_maps(M)
    return E @ half


def apply_inner(op, U):
    """``Lin U`` on the inner grid for an even-in-theta field ``U`` (``M x K``)."""
    Uh = _half(U, op.M)
    L, _ = _lb_sector(op.shape, op.M)
    out = op.eps**2 * (L @ Uh) + Uh @ op.At.T
    return _full(out, op.M)


def project_out(op, f):
    """Remove the ``v*'`` component per theta node."""
    f = np.asarray(f, float)
    c = op.h * (f @ op.kernel)
    return f - c[:, None] * op.kernel[None, :]


def _overlap(op, f):
    c = op.h * (f @ op.kernel)
    norms = np.sqrt(op.h * np.sum(f**2, axis=1))
    return float(np.max(np.abs(c) / np.maximum(norms, 1e-300))) if np.any(norms > 0) else 0.0


def _solve_once(op, f):
    fh = op.modes_inv @ _half(f, op.M)
    out = np.empty_like(fh)
    for j in range(fh.shape[0]):
        rhs = np.concatenate([fh[j], [0.0]])
        out[j] = sla.lu_solve(op._factor(j), rhs)[:-1]
    return _full(op.modes @ out, op.M)


def solve_inner(op, f, squared=False, tol=1e-8):
    """Solve ``Lin U = f`` (or ``Lin^2 U = f``) with ``U`` orthogonal to ``v*'``.

    ``f`` must be even in theta and orthogonal to ``v*'`` on every theta node
    (relative overlap at most ``tol``). Returns ``(U, info)``.
    """
    f = np.asarray(f, float)
    if f.shape != (op.M, op.K):
        raise ValueError("field shape does not match the inner grid")
    refl = np.roll(f[::-1], 1, axis=0)
    if np.max(np.abs(f - refl)) > 1e-12 * max(1.0, float(np.max(np.abs(f)))):
        raise ValueError("inner solve needs a field even in theta1")
    ov = _overlap(op, f)
    if ov > tol:
        raise ValueError(f"right-hand side not orthogonal to v*' (overlap {ov:.3e})")
    U = _solve_once(op, f)
    if squared:
        U = _solve_once(op, U)
    res = apply_inner(op, U)
    if squared:
        res = apply_inner(op, res)
    scale = max(float(np.max(np.abs(f))), 1e-300)
    info = {"residual": float(np.max(np.abs(res - f)) / scale),
            "orthogonality": _overlap(op, U), "rhs_overlap": ov}
    return U, info


# ---------------------------------------------------------------- R and projections

def _inner_on_fermi(grid, U, vstar_w2):
    Utt = _t_deriv(grid, U, 2)
    return -Utt - surface_laplacian(grid, U) + vstar_w2 * U


def evaluate_R(grid, vt, U, well):
    """``F'(v~) U - Lin^2 U`` expanded as in the linearization.

    With ``B = -Lap + W''(v~) - Lin``,
    ``R(U) = Lin B U + B Lin U + B^2 U + W'''(v~) (-Lap v~ + W'(v~)) U``.
    """
    from .fermi import fermi_laplacian_exact
    U = np.asarray(U, float)
    prof = vt.profile
    V = vt.values
    w2s = well.deriv(prof.v, 2)[None, :]
    w2 = well.deriv(V, 2)

    def Lin(X):
        return _inner_on_fermi(grid, X, w2s)

    def B(X):
        return -fermi_laplacian_exact(grid, X) + w2 * X - Lin(X)

    wt = -vt.laplacian() + well.deriv(V, 1)
    BU = B(U)
    return Lin(BU) + B(Lin(U)) + B(BU) + well.deriv(V, 3) * wt * U


def projection_terms(grid, vt, U, well, cutoffs=None):
    """``p2`` and ``p4`` (divided by ``c*``) as even CircleFields."""
    cut = build_cutoffs(grid.eps, grid.tau) if cutoffs is None else cutoffs
    prof = vt.profile
    chi1 = cut.chi(1, grid.t)[None, :]
    chi4 = cut.chi(4, grid.t)[None, :]
    Qv = quadratic_part(grid, vt, U, well).values
    Rv = evaluate_R(grid, vt, U, well)
    p2 = simpson(chi1 * Qv * prof.v1[None, :], x=grid.t, axis=1) / prof.c_star
    p4 = simpson(chi4 * Rv * prof.v1[None, :], x=grid.t, axis=1) / prof.c_star
    return (CircleField(p2, symmetric=True), CircleField(p4, symmetric=True),
            chi1 * Qv, chi4 * Rv)


def _even(f):
    return 0.5 * (f + np.roll(f[::-1], 1, axis=0))


def solve_projected(op, grid, vt, well, cut, g, U0=None, rtol=1e-12):
    """Solve ``Lin^2 U + P chi4 R(U) = P g`` with ``U`` orthogonal to ``v*'``.

    ``g`` lives on the Fermi grid; ``P`` removes the ``v*'`` component. The
    system is preconditioned by the inner solver, i.e. GMRES runs on
    ``U + G(P chi4 R U) = G(P g)`` with ``G`` the inverse of ``Lin^2``.
    """
    from scipy.sparse.linalg import LinearOperator, gmres
    chi4 = cut.chi(4, grid.t)[None, :]
    shape = (op.M, op.K)

    def G(f):
        return solve_inner(op, project_out(op, _even(f)), squared=True, tol=1e-6)[0]

    def matvec(x):
        U = x.reshape(shape)
        Rv = evaluate_R(grid, vt, op.restrict(U, grid.K), well)
        return (U + G(op.embed(chi4 * Rv))).ravel()

    b = G(op.embed(g)).ravel()
    A = LinearOperator((b.size, b.size), matvec=matvec, dtype=float)
    x0 = None if U0 is None else np.asarray(U0).ravel()
    x, info = gmres(A, b, x0=x0, rtol=rtol, atol=0.0, restart=40, maxiter=20)
    if info < 0:
        raise ArithmeticError("GMRES breakdown in the projected inner problem")
    return x.reshape(shape)


# ---------------------------------------------------------------- volume

def interior_volume(eps, phi, shape=CLIFFORD):
    """Volume enclosed by the dilated surface displaced by ``phi`` along the normal."""
    if not shape.is_clifford:
        raise ValueError("closed form is written for the Clifford torus")
    th = phi.theta
    p = phi.values
    dth = 2 * np.pi / phi.N
    lin = surface_integral(shape, phi)
    quad = 2 * np.pi * dth * np.sum(p**2 * (np.cos(th) + np.sqrt(2) / 2))
    cub = (2 * np.pi / 3) * dth * np.sum(p**3 * np.cos(th))
    return eps**-3 * 2 * np.sqrt(2) * np.pi**2 + lin / eps**2 + quad / eps + cub


def interior_volume_quadrature(eps, phi, n_theta2=4, n_z=12):
    """Brute-force 3D quadrature of the enclosed volume in toric coordinates.

    Integrates ``|det dx/d(theta1, theta2, z)|`` for
    ``x = (cos t2 a, sin t2 a, s sin t1)``, ``s = z + 1/eps``,
    ``a = s cos t1 + sqrt(2)/eps`` over ``-1/eps < z < phi(theta1)``.
    """
    th1 = phi.theta
    th2 = 2 * np.pi * np.arange(n_theta2) / n_theta2
    gx, gw = np.polynomial.legendre.leggauss(n_z)
    total = 0.0
    for t2 in th2:
        for i, t1 in enumerate(th1):
            lo, hi = -1.0 / eps, phi.values[i]
            z = 0.5 * (hi - lo) * gx + 0.5 * (hi + lo)
            s = z + 1.0 / eps
            a = s * np.cos(t1) + np.sqrt(2.0) / eps
            c1 = np.stack([-np.cos(t2) * s * np.sin(t1), -np.sin(t2) * s * np.sin(t1),
                           s * np.cos(t1)], axis=-1)
            c2 = np.stack([-np.sin(t2) * a, np.cos(t2) * a, np.zeros_like(a)], axis=-1)
            c3 = np.stack([np.full_like(z, np.cos(t2) * np.cos(t1)),
                           np.full_like(z, np.sin(t2) * np.cos(t1)),
                           np.full_like(z, np.sin(t1))], axis=-1)
            J = np.abs(np.linalg.det(np.stack([c1, c2, c3], axis=-1)))
            total += 0.5 * (hi - lo) * np.sum(gw * J)
    return total * (2 * np.pi / phi.N) * (2 * np.pi / n_theta2)


def profile_tail_integral(well, upper=np.inf, panel=0.5):
    """``int_0^upper t (1 - v*(t)) dt`` by Gauss-Legendre panels."""
    if not np.isfinite(upper):
        upper = 60.0 / well.decay_rate
    n = max(1, int(np.ceil(upper / panel)))
    edges = np.linspace(0.0, upper, n + 1)
    x, w = np.polynomial.legendre.leggauss(20)
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    half = 0.5 * (edges[1] - edges[0])
    t = (mid + half * x[None, :]).ravel()
    v, _ = _profile_values(well, t)
    return float(half * np.sum((t * (1.0 - v)).reshape(n, -1) @ w))


def _formula_terms(eps, phi, well, tau):
    area_term = surface_integral(CLIFFORD, phi)
    I = profile_tail_integral(well, 6.0 + tau / (2 * eps))
    return (eps**-3 * 4 * np.sqrt(2) * np.pi**2, 2 * area_term / eps**2,
            8 * np.sqrt(2) * np.pi**2 * I / eps)


def mass_defect(eps, phi, well=None, tau=None, h=0.02):
    """``int (1 - v)`` by direct quadrature, the formula's three leading terms and ``G``.

    The global field is evaluated on its own fine t-grid over the transition
    band ``|t| <= tau/(2 eps) + 6``; beyond it ``v = -1`` inside (the enclosed
    volume is added in closed form, doubled) and ``v = +1`` outside.
    """
    well = DoubleWell.quartic() if well is None else well
    tau = default_tau() if tau is None else float(tau)
    band = tau / (2 * eps) + 6.0
    grid = FermiGrid(float(eps), CLIFFORD, phi.theta, h * np.arange(-int(np.ceil(band / h)),
                                                                   int(np.ceil(band / h)) + 1),
                     phi, tau)
    # v~ from its separable formula: the transition band may leave the
    # Fermi collar at the largest eps, where only the closed form is meaningful
    prof = profile_on_grid(grid, well)
    corr, _, _ = correction_field(CLIFFORD, phi, prof.d_const, eps)
    vt = prof.v[None, :] + eps**2 * np.outer(corr.values, prof.eta)
    cut = build_cutoffs(eps, tau)
    v, _ = assemble_global_v(grid, cut, vt)
    t = grid.t
    th = grid.theta[:, None]
    z = t[None, :] + phi.values[:, None]
    zeta = eps * z
    jac = eps**-2 * (1 + zeta) * ((1 + zeta) * np.cos(th) + np.sqrt(2))
    inner = 2 * np.pi * (2 * np.pi / phi.N) * np.sum(simpson((1 - v.values) * jac, x=t, axis=1))
    shifted = CircleField(phi.values + t[0], symmetric=phi.symmetric)
    core = 2.0 * interior_volume(eps, shifted)
    direct = inner + core
    terms = _formula_terms(eps, phi, well, tau)
    G = 0.5 * (direct - sum(terms))
    return {"direct": float(direct), "terms": [float(x) for x in terms], "G": float(G)}


def volume_residual(eps, phi, well=None, tau=None, G=0.0):
    """``int phi dsigma + 4 sqrt2 pi^2 eps int_0^{6+tau/2eps} t(1-v*) + eps^2 G``."""
    well = DoubleWell.quartic() if well is None else well
    tau = default_tau() if tau is None else float(tau)
    I = profile_tail_integral(well, 6.0 + tau / (2 * eps))
    return float(surface_integral(CLIFFORD, phi) + 4 * np.sqrt(2) * np.pi**2 * eps * I
                 + eps**2 * G)


# ---------------------------------------------------------------- reduced solve

@dataclass
class BifurcationConfig:
    M: int = 64
    h: float = 0.05
    tau: float | None = None
    max_iter: int = 30
    tol: float = 1e-8
    omega: float = 1.0
    phi_margin: float = 0.5
    include_G: bool = True
    well: object = None

    def to_dict(self):
        d = asdict(self)
        d["well"] = (self.well or DoubleWell.quartic()).to_dict()
        return d


@dataclass
class ReducedState:
    eps: float
    phi: CircleField
    lam: float
    converged: bool
    trace: list
    U: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def summary(self):
        return {"eps": self.eps, "converged": self.converged, "iterations": len(self.trace),
                "lambda": self.lam, "phi_sup": self.phi.sup(),
                "phi_sup_over_eps": self.phi.sup() / self.eps,
                "phi_cosines": self.phi.cosine_coefficients()[:12].tolist(),
                **self.diagnostics}


def solve_bifurcation(eps, config=None):
    """Damped bordered iteration for the reduced equation with the volume constraint.

    Each step evaluates ``q = int (F(v~) + chi1 Q(U) + chi4 R(U)) v*' dt``,
    solves ``L~0 D + lam = -q / (eps^4 c*)``, ``int D dsigma = vol_res`` and
    sets ``phi <- phi - omega D``; the inner correction ``U`` is refreshed
    once per step from the projected problem.
    """
    cfg = BifurcationConfig() if config is None else config
    well = cfg.well or DoubleWell.quartic()
    tau = default_tau() if cfg.tau is None else cfg.tau
    M = cfg.M
    if eps > 0.1 + 1e-12:
        raise ValueError("eps must be at most 0.1")
    base = FermiGrid.build(eps, M=M, h=cfg.h, tau=tau)
    T = min(base.T, 0.95 * 0.41421356237309503 / eps - cfg.phi_margin)
    grid0 = FermiGrid.build(eps, M=M, h=cfg.h, tau=tau, half_width=T)
    op = assemble_inner(eps, well=well, M=M, h=cfg.h, half_width=grid0.T)
    lt = assemble_ltilde(CLIFFORD, M, symmetric=True)
    n = lt.size
    Bmat = np.zeros((n + 1, n + 1))
    Bmat[:n, :n] = lt.matrix
    Bmat[:n, n] = 1.0
    Bmat[n, :n] = lt.weights * CLIFFORD.area
    lu = sla.lu_factor(Bmat)
    cut = build_cutoffs(eps, tau)
    chi1 = cut.chi(1, grid0.t)[None, :]
    chi4 = cut.chi(4, grid0.t)[None, :]

    phi = CircleField.constant(0.0, M)
    U = np.zeros((M, op.K))
    omega = cfg.omega
    trace = []
    prev = np.inf
    lam = 0.0
    converged = False
    G = 0.0
    t0 = time.perf_counter()
    failure = None
    for it in range(1, cfg.max_iter + 1):
        try:
            grid = grid0.with_phi(phi)
        except ValueError as exc:
            failure = f"iteration {it}: {exc}"
            break
        vt = assemble_vtilde(grid, well)
        F = evaluate_F(grid, vt, well).values
        # inner correction for the current phi; the quadratic term is lagged
        Qv = quadratic_part(grid, vt, op.restrict(U, grid.K), well).values
        U_new = solve_projected(op, grid, vt, well, cut, -(chi4 * F + chi1 * Qv), U)
        dU = float(np.max(np.abs(U_new - U)))
        U = U_new
        Uf = op.restrict(U, grid.K)
        Qv = quadratic_part(grid, vt, Uf, well).values
        Rv = evaluate_R(grid, vt, Uf, well)
        c = vt.profile.c_star
        q = project_residual(grid, F + chi1 * Qv + chi4 * Rv, well)
        if cfg.include_G:
            G = mass_defect(eps, phi, well, tau)["G"]
        vres = volume_residual(eps, phi, well, tau, G)
        rhs = np.concatenate([-(q.values[: M // 2 + 1]) / (eps**4 * c), [vres]])
        sol = sla.lu_solve(lu, rhs)
        step = _full(sol[:n], M)
        lam = float(sol[n])
        step_norm = float(np.max(np.abs(step)))
        if step_norm > prev and omega > 1 / 64:
            omega *= 0.5
        elif step_norm < 0.5 * prev:
            omega = min(cfg.omega, 2.0 * omega)
        prev = step_norm
        phi = CircleField(phi.values - omega * step, symmetric=True)
        upd = omega * step_norm
        trace.append({"iter": it, "update_norm": upd, "inner_update": dU,
                      "proj_norm": float(np.max(np.abs(q.values))),
                      "vol_residual": vres, "lambda": lam, "omega": omega})
        if upd <= cfg.tol and dU <= cfg.tol:
            converged = True
            break
    if failure is not None:
        return ReducedState(float(eps), phi, lam, False, trace, U,
                            {"failure": failure, "seconds": time.perf_counter() - t0})
    # diagnostics at the final state
    grid = grid0.with_phi(phi)
    vt = assemble_vtilde(grid, well)
    if cfg.include_G:
        G = mass_defect(eps, phi, well, tau)["G"]
    Uf = op.restrict(U, grid.K)
    odd = 0.5 * (Uf - Uf[:, ::-1])
    p2, p4, _, _ = projection_terms(grid, vt, Uf, well, cut)
    diag = {"vol_residual": volume_residual(eps, phi, well, tau, G), "G": G,
            "U_sup": float(np.max(np.abs(Uf))),
            "U_odd_sup": float(np.max(np.abs(odd))),
            "U_odd_over_eps4": float(np.max(np.abs(odd)) / eps**4),
            "p2_sup": p2.sup(), "p4_sup": p4.sup(), "p4_over_eps5": p4.sup() / eps**5,
            "grid": grid.describe(), "inner_K": op.K, "seconds": time.perf_counter() - t0}
    return ReducedState(float(eps), phi, lam, converged, trace, U, diag)
