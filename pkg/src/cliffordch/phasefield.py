"""Approximate phase-field solution around the dilated torus and its residual.

Fields live on a :class:`~cliffordch.fermi.FermiGrid` in ``(theta1, t)``.
The fourth-order operator is

    F(u) = -Lap w + W''(u) w,    w = -Lap u + W'(u),

with both Laplacians taken in the exact Fermi metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from ._numerics import fourier_diff
from .fermi import FermiGrid, GridField, fermi_laplacian_exact, laplacian_from_jets
from .geometry import CircleField, covariant_forms, geometry_field, laplace_beltrami
from .profile import build_eta, default_half_width, solve_heteroclinic

__all__ = [
    "CutoffSet",
    "build_cutoffs",
    "profile_on_grid",
    "correction_field",
    "assemble_vtilde",
    "assemble_global_v",
    "evaluate_F",
    "evaluate_Fprime",
    "evaluate_Fsecond",
    "quadratic_part",
    "evaluate_Gamma",
    "project_residual",
    "resolution_check",
]


# ---------------------------------------------------------------- cutoffs

def _flat_jet(x, order):
    """Taylor coefficients of ``f(x) = exp(-1/x)`` (zero for ``x <= 0``).

    ``f^(k)(x) = exp(-1/x) P_k(1/x)`` with ``P_{k+1}(u) = u^2 (P_k(u) - P_k'(u))``.
    Returns an array of shape ``(order + 1,) + x.shape`` holding ``f^(k)/k!``.
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros((order + 1,) + x.shape)
    pos = x > 1e-30
    u = np.where(pos, 1.0 / np.where(pos, x, 1.0), 0.0)
    base = np.where(pos, np.exp(-u), 0.0)
    P = np.polynomial.Polynomial([1.0])
    fact = 1.0
    for k in range(order + 1):
        if k:
            fact *= k
        out[k] = np.where(pos, base * P(u), 0.0) / fact
        q = np.polynomial.Polynomial([0.0, 0.0, 1.0])
        P = q * (P - P.deriv())
    return out


def _series_div(a, d):
    """Truncated Taylor series of ``a / d``."""
    c = np.zeros_like(a)
    for n in range(a.shape[0]):
        acc = a[n].copy()
        for k in range(1, n + 1):
            acc -= d[k] * c[n - k]
        c[n] = acc / d[0]
    return c


def bump(s, order=4):
    """``zeta`` and its derivatives through ``order`` at ``s``.

    ``zeta = f(2 - s) / (f(2 - s) + f(s - 1))``: equal to 1 for ``s <= 1``,
    0 for ``s >= 2`` and C-infinity in between. Row ``k`` of the result is
    ``zeta^(k)(s)``.
    """
    s = np.asarray(s, dtype=float)
    a = _flat_jet(2.0 - s, order)
    b = _flat_jet(s - 1.0, order)
    sign = (-1.0) ** np.arange(order + 1)
    a = a * sign.reshape((-1,) + (1,) * s.ndim)
    c = _series_div(a, a + b)
    fact = np.cumprod(np.concatenate([[1.0], np.arange(1, order + 1)]))
    return c * fact.reshape((-1,) + (1,) * s.ndim)


@dataclass(frozen=True)
class CutoffSet:
    """Cutoffs ``chi_m(t) = zeta(|t| - tau/(2 eps) - m)`` and the outer sign."""

    eps: float
    tau: float
    levels: tuple = (1, 2, 4, 5)

    @property
    def inner_width(self):
        return self.tau / (2.0 * self.eps)

    def zeta(self, s, k=0):
        return bump(s, order=max(k, 0))[k]

    def chi(self, m, t, k=0):
        """``d^k chi_m / dt^k`` at ``t``."""
        t = np.asarray(t, dtype=float)
        val = self.zeta(np.abs(t) - self.inner_width - m, k)
        return val * np.sign(t) ** k if k else val

    def sign(self, t):
        return np.where(np.asarray(t) >= 0.0, 1.0, -1.0)


def build_cutoffs(eps, tau):
    if not (0.0 < tau < np.sqrt(2.0) - 1.0):
        raise ValueError("tau must lie in (0, sqrt(2) - 1)")
    if eps <= 0:
        raise ValueError("eps must be positive")
    return CutoffSet(float(eps), float(tau))


# ---------------------------------------------------------------- profile on the grid

@dataclass(frozen=True)
class GridProfile:
    """Profile values and ``eta`` restricted to the t-nodes of a grid."""

    t: np.ndarray
    v: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    eta: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    c_star: float
    b_star: float
    d_const: float
    decay_rate: float
    well: object = field(repr=False, default=None)


def profile_on_grid(grid, well):
    """Tabulate ``v*`` and ``eta`` on the grid's own t-nodes.

    The table is built on a wider grid with the same spacing (so that the
    far-field integral defining ``eta`` is accurate) and then restricted.
    """
    key = ("profile", id(well), well.to_dict().__repr__())
    if key in grid._cache:
        return grid._cache[key]
    h = grid.h
    k_grid = (grid.K - 1) // 2
    k_ext = max(k_grid, int(np.ceil(default_half_width(well) / h)))
    table = build_eta(solve_heteroclinic(well, half_width=k_ext * h, node_count=2 * k_ext + 1))
    sl = slice(k_ext - k_grid, k_ext + k_grid + 1)
    if not np.allclose(table.t[sl], grid.t, atol=1e-12):
        raise RuntimeError("profile nodes do not match the grid")
    out = GridProfile(grid.t, table.v[sl], table.v1[sl], table.v2[sl], table.eta[sl],
                      table.eta1[sl], table.eta2[sl],
                      table.c_star, table.b_star, table.d_const, table.decay_rate, well)
    grid._cache[key] = out
    return out


# ---------------------------------------------------------------- approximate solution

def correction_field(shape, phi, d_const, eps):
    """``psi + eps L phi`` on the circle, plus its two parts.

    ``psi = H^2 - 2|A|^2 + d |grad phi|^2`` and
    ``L phi = -4 <A, hess phi> + 2 H Lap phi + phi (2 H |A|^2 - 4 tr A^3)``.
    """
    N = phi.N
    H = geometry_field(shape, N, "H")
    A2 = geometry_field(shape, N, "absA2")
    T3 = geometry_field(shape, N, "trA3")
    cf = covariant_forms(shape, phi, phi)
    psi = H * H - 2.0 * A2 + d_const * cf["grad_sq"]
    Lphi = (-4.0 * cf["A_hess"] + 2.0 * H * laplace_beltrami(shape, phi)
            + phi * (2.0 * H * A2 - 4.0 * T3))
    psi = CircleField(psi.values, symmetric=phi.symmetric)
    Lphi = CircleField(Lphi.values, symmetric=phi.symmetric)
    return psi + eps * Lphi, psi, Lphi


@dataclass
class VTilde:
    field: GridField
    base: np.ndarray
    correction: np.ndarray
    psi: CircleField
    Lphi: CircleField
    profile: GridProfile
    coeff: CircleField

    @property
    def values(self):
        return self.field.values

    @property
    def grid(self):
        return self.field.grid

    def laplacian(self):
        """Fermi Laplacian from the analytic ``t``-jets of the separable terms."""
        pr, e2 = self.profile, self.grid.eps**2
        c = self.coeff.values[:, None]
        c1 = fourier_diff(self.coeff.values, 1)[:, None]
        c2 = fourier_diff(self.coeff.values, 2)[:, None]
        Ut = pr.v1[None, :] + e2 * c * pr.eta1[None, :]
        Utt = pr.v2[None, :] + e2 * c * pr.eta2[None, :]
        Uth = e2 * c1 * pr.eta[None, :]
        Uthth = e2 * c2 * pr.eta[None, :]
        Utht = e2 * c1 * pr.eta1[None, :]
        return laplacian_from_jets(self.grid, Ut, Utt, Uth, Uthth, Utht)


def assemble_vtilde(grid, well, shape=None):
    """``v~ = v*(t) + eps^2 (psi + eps L phi)(theta1) eta(t)`` on ``grid``.

    Returns a :class:`VTilde` carrying the full field and its two parts.
    """
    shape = grid.shape if shape is None else shape
    grid.check_collar()
    prof = profile_on_grid(grid, well)
    corr, psi, Lphi = correction_field(shape, grid.phi, prof.d_const, grid.eps)
    base = np.broadcast_to(prof.v, (grid.M, grid.K)).copy()
    correction = grid.eps**2 * np.outer(corr.values, prof.eta)
    u = GridField(base + correction, grid, "vtilde")
    return VTilde(u, base, correction, psi, Lphi, prof, corr)


def assemble_global_v(grid, cutoffs, vtilde):
    """``chi5 v~ + (1 - chi5) sign(t)``; the second output flags outer nodes."""
    vals = vtilde.values if isinstance(vtilde, (GridField, VTilde)) else np.asarray(vtilde)
    chi5 = cutoffs.chi(5, grid.t)[None, :]
    sgn = cutoffs.sign(grid.t)[None, :]
    out = chi5 * vals + (1.0 - chi5) * sgn
    outer = np.broadcast_to(chi5 == 0.0, vals.shape)
    return GridField(out, grid, "v_global"), outer


# ---------------------------------------------------------------- the operator

def _values(u):
    if isinstance(u, (GridField, VTilde)):
        return u.values
    return np.asarray(u, dtype=float)


def evaluate_F(grid, u, well):
    """``F(u) = -Lap(-Lap u + W'(u)) + W''(u)(-Lap u + W'(u))``.

    For a :class:`VTilde` the inner Laplacian uses analytic ``t``-derivatives,
    which keeps the roundoff of the fourth-order composition near the level
    of a single second difference.
    """
    U = _values(u)
    lap = u.laplacian() if isinstance(u, VTilde) else fermi_laplacian_exact(grid, U)
    w = -lap + well.deriv(U, 1)
    return GridField(-fermi_laplacian_exact(grid, w) + well.deriv(U, 2) * w, grid, "F")


def evaluate_Fprime(grid, u, v, well):
    """``F'(u) v``."""
    U, V = _values(u), _values(v)
    lap = lambda X: fermi_laplacian_exact(grid, X)
    W1, W2, W3 = well.deriv(U, 1), well.deriv(U, 2), well.deriv(U, 3)
    inner = -lap(V) + W2 * V
    out = -lap(inner) + W2 * inner + W3 * V * (-lap(U) + W1)
    return GridField(out, grid, "Fprime")


def evaluate_Fsecond(grid, u, v, w, well):
    """``F''(u)[v, w]``."""
    U, V, Wv = _values(u), _values(v), _values(w)
    lap = lambda X: fermi_laplacian_exact(grid, X)
    W1, W2, W3, W4 = (well.deriv(U, k) for k in (1, 2, 3, 4))
    out = (-lap(W3 * V * Wv)
           + W3 * V * (-lap(Wv) + W2 * Wv)
           + W3 * Wv * (-lap(V) + W2 * V)
           + W4 * V * Wv * (-lap(U) + W1)
           + W2 * W3 * V * Wv)
    return GridField(out, grid, "Fsecond")


def quadratic_part(grid, u, w, well, nodes=8):
    """``Q(w) = int_0^1 (1 - s) F''(u + s w)[w, w] ds`` by Gauss-Legendre."""
    U, Wv = _values(u), _values(w)
    x, wt = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * (x + 1.0)
    wt = 0.5 * wt
    out = np.zeros_like(U)
    for si, wi in zip(s, wt):
        out += wi * (1.0 - si) * evaluate_Fsecond(grid, U + si * Wv, Wv, Wv, well).values
    return GridField(out, grid, "Q")


def evaluate_Gamma(grid, cutoffs, v, well, gamma=None):
    """``(1 - chi1) W''(v) + chi1 W''(1)`` with a bounds report."""
    V = _values(v)
    chi1 = cutoffs.chi(1, grid.t)[None, :]
    G = (1.0 - chi1) * well.deriv(V, 2) + chi1 * well.curvature_at_well
    gamma = 0.9 * well.decay_rate if gamma is None else float(gamma)
    lo, hi = float(G.min()), float(G.max())
    report = {"min": lo, "max": hi, "gamma": gamma, "gamma_sq": gamma**2,
              "ok": bool(gamma**2 < lo)}
    return GridField(G, grid, "Gamma"), report


def project_residual(grid, Fval, well):
    """``q(theta1) = int F v*'(t) dt`` as an even CircleField."""
    prof = profile_on_grid(grid, well)
    q = simpson(_values(Fval) * prof.v1[None, :], x=grid.t, axis=1)
    return CircleField(q, symmetric=grid.phi.symmetric)


def resolution_check(grid, u_builder, well, tol=0.1):
    """Compare ``F`` on ``grid`` and on the grid with every other t-node.

    ``u_builder(grid)`` must return the field to evaluate. The relative
    disagreement on the common nodes, away from the one-sided closures, is
    reported; above ``tol`` the derivative resolution is flagged.
    """
    F1 = evaluate_F(grid, u_builder(grid), well).values
    # keep t = 0 on the coarse grid
    start = (grid.K // 2) % 2
    coarse = FermiGrid(grid.eps, grid.shape, grid.theta, grid.t[start::2], grid.phi, grid.tau)
    F2 = evaluate_F(coarse, u_builder(coarse), well).values
    inner = slice(8, -8)
    a = F1[:, start::2][:, inner]
    b = F2[:, inner]
    scale = max(float(np.max(np.abs(a))), 1e-300)
    rel = float(np.max(np.abs(a - b)) / scale)
    return {"relative_disagreement": rel, "flagged": bool(rel > tol)}
