"""Jacobi operator, linearized Willmore operator and the bordered system.

Operators act on rotationally symmetric fields sampled on ``N`` uniform
``theta1`` nodes (full mode) or on the ``N/2 + 1`` independent samples of an
even field (symmetric mode). Fourier collocation is used throughout.

    L0 phi  = -Lap phi - |A|^2 phi
    L~0 phi = L0^2 phi + 3/2 H^2 L0 phi - H (grad phi, grad H) + 2 (A grad phi, grad H)
              + 2 H <A, hess phi> + phi (2 <A, hess H> + |grad H|^2 + 2 H tr A^3)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._numerics import fourier_diff
from .geometry import (CircleField, covariant_forms, geometry_field, jet,
                       laplace_beltrami, surface_integral)

__all__ = [
    "OperatorMatrix",
    "assemble_jacobi",
    "assemble_ltilde",
    "apply_ltilde",
    "solve_extended",
    "spectrum_report",
    "bordered_matrix",
    "kernel_fields",
    "write_matrix",
    "read_matrix",
]


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense collocation matrix with the quadrature weights of its grid.

    ``weights`` are ``dsigma`` weights normalized to unit total mass, so
    ``sum w_k f_k`` is the surface average of ``f``.
    """

    matrix: np.ndarray
    mode_count: int
    symmetric: bool
    weights: np.ndarray

    @property
    def size(self):
        return self.matrix.shape[0]

    def adjoint(self):
        W = self.weights
        return (self.matrix.T * W[None, :]) / W[:, None]

    def self_adjointness_defect(self):
        d = np.linalg.norm(self.matrix - self.adjoint())
        return float(d / np.linalg.norm(self.matrix))

    def orthonormal_form(self):
        """``W^(1/2) M W^(-1/2)``: symmetric when ``M`` is self-adjoint."""
        s = np.sqrt(self.weights)
        return self.matrix * s[:, None] / s[None, :]

    def apply(self, field):
        vals = field_to_vector(field, self.symmetric)
        out = self.matrix @ vals
        return vector_to_field(out, self.mode_count, self.symmetric)


def write_matrix(path, M):
    """Raw dump: two little-endian int64 (rows, cols), then float64 entries row-major."""
    M = np.ascontiguousarray(M, dtype="<f8")
    with open(path, "wb") as fh:
        np.asarray(M.shape, dtype="<i8").tofile(fh)
        M.tofile(fh)


def read_matrix(path):
    with open(path, "rb") as fh:
        rows, cols = np.fromfile(fh, dtype="<i8", count=2)
        data = np.fromfile(fh, dtype="<f8", count=int(rows) * int(cols))
    if data.size != rows * cols:
        raise ValueError(f"{path}: truncated matrix file")
    return data.reshape(int(rows), int(cols))


def _diff_matrices(N):
    eye = np.eye(N)
    return fourier_diff(eye, 1, axis=0), fourier_diff(eye, 2, axis=0)


def _weights(shape, N):
    th = CircleField.nodes(N)
    w = shape.R + shape.r * np.cos(th)
    return w / w.sum()


def _even_maps(N):
    """``E`` expands half samples to the full even vector; ``P`` restricts."""
    m = N // 2 + 1
    E = np.zeros((N, m))
    for k in range(N):
        E[k, min(k, N - k)] = 1.0
    P = np.zeros((m, N))
    P[np.arange(m), np.arange(m)] = 1.0
    return E, P


def field_to_vector(field, symmetric):
    return field.values[: field.N // 2 + 1].copy() if symmetric else field.values.copy()


def vector_to_field(vec, N, symmetric):
    if symmetric:
        E, _ = _even_maps(N)
        return CircleField(E @ vec, symmetric=True)
    return CircleField(vec, symmetric=False)


def _finish(M, shape, N, symmetric):
    w = _weights(shape, N)
    if symmetric:
        E, P = _even_maps(N)
        M = P @ M @ E
        w = E.T @ w
    return OperatorMatrix(M, N, symmetric, w)


def _div_matrix(shape, N, coeff):
    """``phi -> (1/sqrt g) d1 (sqrt g coeff phi')``, symmetric in the dsigma product."""
    D1, _ = _diff_matrices(N)
    th = CircleField.nodes(N)
    sg = shape.r * (shape.R + shape.r * np.cos(th))
    return (1.0 / sg)[:, None] * (D1 @ ((sg * coeff)[:, None] * D1))


def _lb_matrix(shape, N):
    """Laplace-Beltrami collocation matrix with a Nyquist closure.

    The divergence form annihilates the sampled Nyquist mode (its first
    derivative vanishes on the nodes). That mode is an exact eigenvector, so
    a weighted rank-one term gives it the eigenvalue ``-(N/2)^2 / r^2``
    without affecting the other modes or the self-adjointness.
    """
    L = _div_matrix(shape, N, np.full(N, 1.0 / shape.r**2))
    w = _weights(shape, N)
    nyq = (-1.0) ** np.arange(N)
    nyq = nyq / np.sqrt(nyq @ (w * nyq))
    return L - (N / 2) ** 2 / shape.r**2 * np.outer(nyq, w * nyq)


def _jacobi_full(shape, N):
    J = jet(shape, CircleField.nodes(N))
    return -_lb_matrix(shape, N) - np.diag(J.absA2)


def assemble_jacobi(shape, N=64, symmetric=False):
    """``L0 = -Lap - |A|^2`` as an :class:`OperatorMatrix`."""
    return _finish(_jacobi_full(shape, N), shape, N, symmetric)


def _ltilde_full(shape, N):
    # Divergence form: the first-order terms cancel by Codazzi (div A = grad H),
    #   L~0 = L0^2 - 3/2 div(H^2 grad) - 3/2 H^2 |A|^2 + 2 div(H A grad) + potential,
    # which keeps the collocation matrix exactly self-adjoint for the dsigma weights.
    th = CircleField.nodes(N)
    J = jet(shape, th)
    r = shape.r
    rho = shape.R + r * np.cos(th)
    L0 = _jacobi_full(shape, N)
    A11 = J.k1 / r**2
    A22G = (J.k2 / rho**2) * J.christoffel[..., 0, 1, 1]
    H, dH, d2H = J.H, J.dH, J.d2H
    A_hess_H = A11 * d2H - A22G * dH
    pot = 2.0 * A_hess_H + dH**2 / r**2 + 2.0 * H * J.trA3
    return (L0 @ L0 - 1.5 * _div_matrix(shape, N, H**2 / r**2)
            + 2.0 * _div_matrix(shape, N, H * A11)
            + np.diag(pot - 1.5 * H**2 * J.absA2))


def assemble_ltilde(shape, N=64, symmetric=False):
    """Linearized Willmore operator ``L~0`` as an :class:`OperatorMatrix`."""
    return _finish(_ltilde_full(shape, N), shape, N, symmetric)


def apply_ltilde(shape, phi):
    """Apply ``L~0`` term by term with the field calculus of :mod:`geometry`."""
    N = phi.N
    H = geometry_field(shape, N, "H")
    A2 = geometry_field(shape, N, "absA2")
    T3 = geometry_field(shape, N, "trA3")

    def L0(f):
        return -laplace_beltrami(shape, f) - A2 * f

    L0phi = L0(phi)
    cf = covariant_forms(shape, phi, H)
    cH = covariant_forms(shape, H, H)
    out = (L0(L0phi) + 1.5 * (H * H) * L0phi - H * cf["grad_dot"] + 2.0 * cf["A_grad"]
           + 2.0 * H * cf["A_hess"]
           + phi * (2.0 * cH["A_hess"] + cH["grad_sq"] + 2.0 * H * T3))
    return CircleField(out.values, symmetric=phi.symmetric)


def kernel_fields(N):
    """Normal components of the x3-translation and of the dilation at Clifford."""
    return (CircleField.from_function(np.sin, N, symmetric=False),
            CircleField.from_function(lambda t: 1.0 + np.sqrt(2.0) * np.cos(t), N,
                                      symmetric=True))


def bordered_matrix(op):
    """Bordered matrix in discrete-orthonormal coordinates.

    ``[[W^1/2 M W^-1/2, e], [e^T, 0]]`` with ``e = W^1/2 1``; the last row
    measures the surface average.
    """
    A = op.orthonormal_form()
    e = np.sqrt(op.weights)
    n = A.shape[0]
    B = np.zeros((n + 1, n + 1))
    B[:n, :n] = A
    B[:n, n] = e
    B[n, :n] = e
    return B


def solve_extended(shape, f, m, N=None, op=None):
    """Solve ``L~0 phi + lam = f`` with ``int phi dsigma = m`` (symmetric mode).

    Returns ``(phi, lam, info)`` where ``info`` holds both residuals and the
    smallest singular value of the bordered matrix.
    """
    N = f.N if N is None else N
    if f.N != N:
        f = f.resample(N)
    if not f.symmetric:
        raise ValueError("solve_extended works in the symmetric (even) sector")
    op = assemble_ltilde(shape, N, symmetric=True) if op is None else op
    n = op.size
    B = np.zeros((n + 1, n + 1))
    B[:n, :n] = op.matrix
    B[:n, n] = 1.0
    B[n, :n] = op.weights * shape.area
    rhs = np.concatenate([field_to_vector(f, True), [m]])
    try:
        sol = np.linalg.solve(B, rhs)
    except np.linalg.LinAlgError as exc:
        smin = float(np.linalg.svd(bordered_matrix(op), compute_uv=False)[-1])
        raise np.linalg.LinAlgError(f"bordered system singular (sigma_min={smin:.3e})") from exc
    phi = vector_to_field(sol[:n], N, True)
    lam = float(sol[n])
    res1 = np.max(np.abs(op.matrix @ sol[:n] + lam - rhs[:n]))
    res2 = abs(surface_integral(shape, phi) - m)
    return phi, lam, {"residual_equation": float(res1), "residual_constraint": float(res2)}


def spectrum_report(shape, N=64, symmetric=False):
    """Eigenvalues of ``L~0`` and the smallest singular value of the bordered system."""
    op = assemble_ltilde(shape, N, symmetric=symmetric)
    A = op.orthonormal_form()
    ev_raw = np.linalg.eigvals(A)
    ev = np.sort(np.linalg.eigvalsh(0.5 * (A + A.T)))
    sv = np.linalg.svd(bordered_matrix(op), compute_uv=False)
    return {
        "N": N,
        "symmetric": symmetric,
        "eigenvalues": ev.tolist(),
        "max_imag": float(np.max(np.abs(ev_raw.imag))),
        "self_adjointness_defect": op.self_adjointness_defect(),
        "sigma_min_bordered": float(sv[-1]),
        "near_zero": int(np.sum(np.abs(ev) <= 1e-6)),
    }
