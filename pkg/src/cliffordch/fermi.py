"""Parallel-surface calculus in Fermi coordinates around a torus of revolution.

Unit-scale parallel surfaces ``Sigma_z = {Y + z nu}`` have metric
``g~_11 = r^2 (1 - z k1)^2``, ``g~_22 = (R + r cos t1)^2 (1 - z k2)^2`` and mean
curvature ``H~ = sum k_i / (1 - z k_i)``. On the dilated torus with scale
``eps`` and normal distance ``z`` (scaled units) the Euclidean Laplacian of a
rotationally symmetric function is

    u_zz - eps H~(t1, eps z) u_z + eps^2 (g~^11 u_11 + b~^1 u_1)

with ``g~^11`` and ``b~^1`` taken at ``(t1, eps z)``. Fields are sampled on a
tensor grid in ``(t1, t)`` where ``t = z - phi(t1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._numerics import diff_matrix, fourier_diff, fit_slope
from .geometry import CLIFFORD, CircleField, TorusShape, jet

__all__ = [
    "ParallelJet",
    "ExpansionCoeffs",
    "FermiGrid",
    "GridField",
    "parallel_jet",
    "expansion_coeffs",
    "focal_distance",
    "default_tau",
    "fermi_laplacian_exact",
    "laplacian_from_jets",
    "surface_laplacian",
    "apply_D",
    "apply_D_exact",
    "metric_expansion_report",
    "remainder_report",
    "ambient_laplacian",
]


def default_tau():
    return 0.8 * (np.sqrt(2.0) - 1.0)


def focal_distance(shape):
    """Distance (unit scale) to the nearest focal point along the normal."""
    return min(shape.r, shape.R - shape.r)


@dataclass(frozen=True)
class ParallelJet:
    theta1: np.ndarray
    z: np.ndarray
    g_tilde: np.ndarray
    g_tilde_inv: np.ndarray
    H_tilde: np.ndarray
    b_tilde: np.ndarray      # (..., 2)
    half_dz_logdet: np.ndarray


def parallel_jet(shape, theta1, z):
    """Closed-form data of the unit-scale parallel surface at distance ``z``."""
    th, z = np.broadcast_arrays(np.asarray(theta1, float), np.asarray(z, float))
    if np.any(np.abs(z) >= focal_distance(shape)):
        raise ValueError("z at or beyond the focal distance")
    J = jet(shape, th)
    rho = shape.R + shape.r * np.cos(th)
    drho = -shape.r * np.sin(th)
    f1 = 1.0 - z * J.k1
    f2 = 1.0 - z * J.k2
    g11 = shape.r**2 * f1**2
    g22 = rho**2 * f2**2
    zeros = np.zeros_like(th)
    g = np.stack([np.stack([g11, zeros], -1), np.stack([zeros, g22], -1)], -2)
    gi = np.stack([np.stack([1 / g11, zeros], -1), np.stack([zeros, 1 / g22], -1)], -2)
    H = J.k1 / f1 + J.k2 / f2
    # k1 is constant, so d1 g~^11 = 0 and b~^1 = g~^11 d1 log sqrt(det g~)
    b1 = (drho / rho - z * J.dH / f2) / g11
    b = np.stack([b1, zeros], -1)
    half_dz = -(J.k1 / f1 + J.k2 / f2)
    return ParallelJet(th, z, g, gi, H, b, half_dz)


@dataclass(frozen=True)
class ExpansionCoeffs:
    theta1: np.ndarray
    a1: np.ndarray   # (..., 2, 2)
    b1: np.ndarray   # (..., 2)
    a2: np.ndarray
    b2: np.ndarray


def expansion_coeffs(shape, theta1):
    """Coefficients of ``g~^ij`` and ``b~^i`` in powers of the normal distance.

    ``a1 = 2 A^ij``, ``b1 = 2 d_j A^ij + 2 Gamma^k_kj A^ij - g^ij d_j H``,
    ``a2 = d_zz g~^ij / 2`` and ``b2 = d_zz b~^i / 2`` at ``z = 0``, all from
    the closed forms of the parallel metric.
    """
    th = np.asarray(theta1, float)
    J = jet(shape, th)
    r = shape.r
    rho = shape.R + r * np.cos(th)
    drho = -r * np.sin(th)
    k1, k2, dk2 = J.k1, J.k2, J.dH
    zeros = np.zeros_like(th)

    def diag(x, y):
        return np.stack([np.stack([x, zeros], -1), np.stack([zeros, y], -1)], -2)

    a1 = diag(2 * k1 / r**2, 2 * k2 / rho**2)
    a2 = diag(3 * k1**2 / r**2, 3 * k2**2 / rho**2)
    trace_gamma = J.christoffel[..., 0, 0, 0] + J.christoffel[..., 1, 1, 0]
    b1 = 2.0 * trace_gamma * (k1 / r**2) - dk2 / r**2
    b2 = (3 * k1**2 * drho / rho - 2 * k1 * dk2 - k2 * dk2) / r**2
    return ExpansionCoeffs(th, a1, np.stack([b1, zeros], -1), a2, np.stack([b2, zeros], -1))


@dataclass
class FermiGrid:
    """Tensor grid in ``(theta1, t)`` around the dilated torus.

    ``theta1`` has ``M`` uniform periodic nodes; ``t`` is uniform and symmetric
    on ``[-T, T]`` with ``T = min(tau/(2 eps) + 8, 0.95 d/eps - max|phi|)``,
    ``d`` the unit-scale focal distance.
    """

    eps: float
    shape: TorusShape
    theta: np.ndarray
    t: np.ndarray
    phi: CircleField
    tau: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def build(cls, eps, shape=CLIFFORD, M=64, h=0.05, tau=None, phi=None, half_width=None):
        tau = default_tau() if tau is None else float(tau)
        if not (0.0 < tau < np.sqrt(2.0) - 1.0):
            raise ValueError("tau must lie in (0, sqrt(2) - 1)")
        if phi is None:
            phi = CircleField.constant(0.0, M)
        if phi.N != M:
            phi = phi.resample(M)
        limit = 0.95 * focal_distance(shape) / eps - phi.sup()
        T = tau / (2 * eps) + 8.0 if half_width is None else float(half_width)
        T = min(T, limit)
        if T <= 1.0:
            raise ValueError("collar too thin for this eps and phi")
        k = int(np.floor(T / h))
        t = h * np.arange(-k, k + 1)
        return cls(float(eps), shape, CircleField.nodes(M), t, phi, tau)

    @property
    def M(self):
        return self.theta.size

    @property
    def K(self):
        return self.t.size

    @property
    def h(self):
        return float(self.t[1] - self.t[0])

    @property
    def T(self):
        return float(self.t[-1])

    def with_phi(self, phi):
        return _regrid(self, phi)

    def dt(self, k):
        key = ("dt", k)
        if key not in self._cache:
            self._cache[key] = diff_matrix(self.K, self.h, k)
        return self._cache[key]

    def z(self):
        return self.t[None, :] + self.phi.values[:, None]

    def check_collar(self):
        lim = focal_distance(self.shape) / self.eps
        if np.max(np.abs(self.z())) >= lim:
            raise ValueError("grid leaves the Fermi collar")

    def describe(self):
        return {"eps": self.eps, "M": self.M, "K": self.K, "h": self.h, "T": self.T,
                "tau": self.tau, "shape": self.shape.to_dict()}


def _regrid(grid, phi):
    """Same t-grid with a new ``phi`` (the collar is re-checked)."""
    if phi.N != grid.M:
        phi = phi.resample(grid.M)
    g = FermiGrid(grid.eps, grid.shape, grid.theta, grid.t, phi, grid.tau)
    g._cache.update({k: v for k, v in grid._cache.items() if k[0] == "dt"})
    g.check_collar()
    return g


@dataclass
class GridField:
    values: np.ndarray
    grid: FermiGrid
    label: str = ""

    def sup(self):
        return float(np.max(np.abs(self.values)))


def _t_deriv(grid, U, k):
    # differentiate U - U(., t=0): the stencil rows do not sum to exactly zero
    # in floating point, and this keeps constants in the kernel exactly
    V = U - U[:, grid.K // 2, None]
    return (grid.dt(k) @ V.T).T


def _derivs(grid, U):
    Ut = _t_deriv(grid, U, 1)
    Utt = _t_deriv(grid, U, 2)
    Uth = fourier_diff(U, 1, axis=0)
    Uthth = fourier_diff(U, 2, axis=0)
    Utht = fourier_diff(Ut, 1, axis=0)
    return Ut, Utt, Uth, Uthth, Utht


def _phi_derivs(grid):
    p = grid.phi.values
    return p, fourier_diff(p, 1), fourier_diff(p, 2)


def _parallel_coeffs(grid):
    key = ("par", grid.phi.values.tobytes())
    if key not in grid._cache:
        z = grid.z()
        zeta = grid.eps * z
        th = np.broadcast_to(grid.theta[:, None], z.shape)
        P = parallel_jet(grid.shape, th, zeta)
        grid._cache[key] = (P.g_tilde_inv[..., 0, 0], P.b_tilde[..., 0], P.H_tilde)
    return grid._cache[key]


def fermi_laplacian_exact(grid, U):
    """Euclidean Laplacian of ``U(theta1, t)`` with ``t = z - phi(theta1)``.

    Uses the exact parallel metric; tangential derivatives are spectral in
    ``theta1`` and 8th-order differences in ``t``.
    """
    U = np.asarray(U, float)
    return laplacian_from_jets(grid, *_derivs(grid, U))


def laplacian_from_jets(grid, Ut, Utt, Uth, Uthth, Utht):
    """Fermi Laplacian assembled from precomputed partial derivatives.

    Lets callers with analytic ``t``-derivatives avoid finite differences.
    """
    grid.check_collar()
    eps = grid.eps
    p, p1, p2 = _phi_derivs(grid)
    G, B, Ht = _parallel_coeffs(grid)
    p1 = p1[:, None]
    p2 = p2[:, None]
    tang = G * (Uthth - 2 * p1 * Utht - p2 * Ut + p1**2 * Utt) + B * (Uth - p1 * Ut)
    return Utt - eps * Ht * Ut + eps**2 * tang


def surface_laplacian(grid, U):
    """``Delta_{Sigma_eps}`` acting in ``theta1`` at fixed ``t``."""
    J = jet(grid.shape, grid.theta)
    r = grid.shape.r
    rho = grid.shape.R + r * np.cos(grid.theta)
    g11 = 1.0 / r**2
    b = (-r * np.sin(grid.theta) / rho) / r**2
    Uth = fourier_diff(U, 1, axis=0)
    Uthth = fourier_diff(U, 2, axis=0)
    del J
    return grid.eps**2 * (g11 * Uthth + b[:, None] * Uth)


def apply_D_exact(grid, U):
    """``Delta U - (d_tt + Delta_{Sigma_eps}) U`` with the exact Laplacian."""
    U = np.asarray(U, float)
    Utt = _t_deriv(grid, U, 2)
    return fermi_laplacian_exact(grid, U) - Utt - surface_laplacian(grid, U)


def apply_D(grid, U):
    """Truncated shifted-coordinate correction operator ``D``.

    Keeps the exact ``-eps H~ d_t`` term, the ``phi``-derivative terms and the
    metric expansion through second order in the normal distance; the
    remainder is of third order.
    """
    U = np.asarray(U, float)
    grid.check_collar()
    eps = grid.eps
    Ut, Utt, Uth, Uthth, Utht = _derivs(grid, U)
    p, p1, p2 = _phi_derivs(grid)
    _, _, Ht = _parallel_coeffs(grid)
    r = grid.shape.r
    rho = grid.shape.R + r * np.cos(grid.theta)
    g11 = 1.0 / r**2
    b = (-r * np.sin(grid.theta) / rho) / r**2
    E = expansion_coeffs(grid.shape, grid.theta)
    a1, b1 = E.a1[:, 0, 0][:, None], E.b1[:, 0][:, None]
    a2, b2 = E.a2[:, 0, 0][:, None], E.b2[:, 0][:, None]
    p1 = p1[:, None]
    p2 = p2[:, None]
    zeta = eps * (grid.t[None, :] + p[:, None])
    sec = Uthth - 2 * p1 * Utht - p2 * Ut + p1**2 * Utt
    fst = Uth - p1 * Ut
    out = -eps * Ht * Ut
    out = out + eps**2 * (g11 * (-2 * p1 * Utht - p2 * Ut + p1**2 * Utt) - b[:, None] * p1 * Ut)
    out = out + eps**2 * zeta * (a1 * sec + b1 * fst)
    out = out + eps**2 * zeta**2 * (a2 * sec + b2 * fst)
    return out


def metric_expansion_report(shape=CLIFFORD, zs=(0.02, 0.04, 0.08, 0.16), M=64):
    """Size of ``g~^ij - (g^ij + z a1^ij)`` (and the second-order remainder) against ``z``.

    Remainders are measured in the metric norm ``|T|_g`` and maximized over a
    ``theta1`` grid.
    """
    th = CircleField.nodes(M)
    J = jet(shape, th)
    E = expansion_coeffs(shape, th)
    first, second = [], []
    for z in zs:
        P = parallel_jet(shape, th, np.full_like(th, z))
        R1 = P.g_tilde_inv - (J.g_inv + z * E.a1)
        R2 = R1 - z**2 * E.a2
        n1 = np.abs(R1[..., 0, 0] * J.g[..., 0, 0]) + np.abs(R1[..., 1, 1] * J.g[..., 1, 1])
        n2 = np.abs(R2[..., 0, 0] * J.g[..., 0, 0]) + np.abs(R2[..., 1, 1] * J.g[..., 1, 1])
        first.append(float(n1.max()))
        second.append(float(n2.max()))
    return {
        "quantity": "metric expansion remainder",
        "z": list(zs),
        "first_order_remainder": first,
        "first_order_slope": fit_slope(zs, first),
        "second_order_remainder": second,
        "second_order_slope": fit_slope(zs, second),
    }


def remainder_report(shape=CLIFFORD, zs=(0.02, 0.04, 0.08, 0.16), M=64):
    """Third-order remainders of both ``g~^11`` and ``b~^1`` against ``z``."""
    th = CircleField.nodes(M)
    J = jet(shape, th)
    E = expansion_coeffs(shape, th)
    rho = shape.R + shape.r * np.cos(th)
    b0 = (-shape.r * np.sin(th) / rho) / shape.r**2
    ra, rb = [], []
    for z in zs:
        P = parallel_jet(shape, th, np.full_like(th, z))
        abar = P.g_tilde_inv[..., 0, 0] - (J.g_inv[..., 0, 0] + z * E.a1[..., 0, 0]
                                            + z**2 * E.a2[..., 0, 0])
        bbar = P.b_tilde[..., 0] - (b0 + z * E.b1[..., 0] + z**2 * E.b2[..., 0])
        ra.append(float(np.abs(abar).max()))
        rb.append(float(np.abs(bbar).max()))
    return {"z": list(zs), "a_bar": ra, "b_bar": rb,
            "a_bar_slope": fit_slope(zs, ra), "b_bar_slope": fit_slope(zs, rb)}


def toric_point(shape, eps, theta1, theta2, z):
    """Cartesian position of the point at distance ``z`` (scaled) above ``theta``."""
    rad = (z + shape.r / eps) * np.cos(theta1) + shape.R / eps
    return np.stack([rad * np.cos(theta2), rad * np.sin(theta2),
                     (z + shape.r / eps) * np.sin(theta1)], -1)


def toric_inverse(shape, eps, x):
    """``(theta1, z)`` of a Cartesian point (the inverse of :func:`toric_point`)."""
    a = np.hypot(x[..., 0], x[..., 1]) - shape.R / eps
    b = x[..., 2]
    return np.arctan2(b, a), np.hypot(a, b) - shape.r / eps


def ambient_laplacian(shape, eps, func, theta1, z, h=2e-2):
    """Cartesian 4th-order finite-difference Laplacian of ``func(theta1, z)``.

    ``func`` is evaluated through the inverse toric map, so this shares no code
    with :func:`fermi_laplacian_exact`.
    """
    x0 = toric_point(shape, eps, np.asarray(theta1, float), 0.0, np.asarray(z, float))
    w = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * h * h)
    out = np.zeros(x0.shape[:-1])
    for axis in range(3):
        for k, wk in zip(range(-2, 3), w):
            x = x0.copy()
            x[..., axis] += k * h
            th, zz = toric_inverse(shape, eps, x)
            out = out + wk * func(th, zz)
    return out
