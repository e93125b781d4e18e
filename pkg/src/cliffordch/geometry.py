"""Differential geometry of tori of revolution.

The torus with centre radius ``R`` and tube radius ``r`` is parametrized by

    Y(t1, t2) = ((R + r cos t1) cos t2, (R + r cos t1) sin t2, r sin t1)

with outward normal ``nu = (cos t1 cos t2, cos t1 sin t2, sin t1)`` and second
fundamental form ``A_ij = -<d_i nu, d_j Y>``. With this convention the
principal curvatures are ``k1 = -1/r`` and ``k2 = -cos t1 / (R + r cos t1)``.

Everything here acts on fields that depend on ``t1`` only (rotational
symmetry), stored as samples on a uniform periodic grid (:class:`CircleField`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._numerics import fourier_diff, fourier_interp

__all__ = [
    "TorusShape",
    "GeometryJet",
    "CircleField",
    "jet",
    "laplace_beltrami",
    "covariant_forms",
    "willmore_residual",
    "surface_integral",
    "geometry_field",
    "a1_route",
    "dealiased_product",
    "CLIFFORD",
]


@dataclass(frozen=True)
class TorusShape:
    R: float
    r: float

    def __post_init__(self):
        if not (self.R > self.r > 0):
            raise ValueError("need R > r > 0 for an embedded torus")

    @classmethod
    def clifford(cls):
        return cls(np.sqrt(2.0), 1.0)

    @property
    def is_clifford(self):
        return bool(abs(self.R / self.r - np.sqrt(2.0)) < 1e-14)

    def scaled(self, eps):
        """The dilated torus with radii ``R/eps`` and ``r/eps``."""
        return TorusShape(self.R / eps, self.r / eps)

    @property
    def area(self):
        return 4.0 * np.pi**2 * self.R * self.r

    @property
    def volume(self):
        return 2.0 * np.pi**2 * self.R * self.r**2

    def to_dict(self):
        return {"R": float(self.R), "r": float(self.r)}


CLIFFORD = TorusShape.clifford()


@dataclass(frozen=True)
class GeometryJet:
    """Pointwise geometric data at colatitude ``theta1`` (arrays broadcast)."""

    theta1: np.ndarray
    g: np.ndarray          # (..., 2, 2)
    g_inv: np.ndarray
    A: np.ndarray          # lower indices
    k1: np.ndarray
    k2: np.ndarray
    H: np.ndarray
    absA2: np.ndarray
    trA3: np.ndarray
    K: np.ndarray
    christoffel: np.ndarray  # (..., 2, 2, 2) as Gamma[k, i, j]
    dH: np.ndarray
    d2H: np.ndarray
    dAbsA2: np.ndarray
    d2AbsA2: np.ndarray
    sqrt_g: np.ndarray

    def to_dict(self):
        out = {}
        for name in self.__dataclass_fields__:
            val = np.asarray(getattr(self, name))
            out[name] = val.tolist()
        return out


def _rho(shape, theta):
    return shape.R + shape.r * np.cos(theta)


def jet(shape, theta1):
    """Closed-form geometric jet of ``shape`` at ``theta1`` (scalar or array)."""
    th = np.asarray(theta1, dtype=float)
    R, r = shape.R, shape.r
    c, s = np.cos(th), np.sin(th)
    rho = R + r * c
    drho = -r * s
    k1 = np.full_like(th, -1.0 / r)
    k2 = -c / rho
    dk2 = R * s / rho**2
    d2k2 = R * (c / rho**2 + 2.0 * r * s**2 / rho**3)
    H = k1 + k2
    absA2 = k1**2 + k2**2
    zeros = np.zeros_like(th)
    g = np.stack([np.stack([np.full_like(th, r * r), zeros], -1),
                  np.stack([zeros, rho**2], -1)], -2)
    g_inv = np.stack([np.stack([np.full_like(th, 1.0 / (r * r)), zeros], -1),
                      np.stack([zeros, 1.0 / rho**2], -1)], -2)
    A = np.stack([np.stack([k1 * r * r, zeros], -1),
                  np.stack([zeros, k2 * rho**2], -1)], -2)
    gam = np.zeros(th.shape + (2, 2, 2))
    gam[..., 0, 1, 1] = -rho * drho / r**2
    gam[..., 1, 0, 1] = drho / rho
    gam[..., 1, 1, 0] = drho / rho
    return GeometryJet(
        theta1=th, g=g, g_inv=g_inv, A=A, k1=k1, k2=k2, H=H, absA2=absA2,
        trA3=k1**3 + k2**3, K=k1 * k2, christoffel=gam,
        dH=dk2, d2H=d2k2, dAbsA2=2.0 * k2 * dk2,
        d2AbsA2=2.0 * dk2**2 + 2.0 * k2 * d2k2, sqrt_g=r * rho,
    )


class CircleField:
    """A function of ``theta1`` sampled on ``N`` uniform nodes of ``[0, 2 pi)``.

    In symmetric mode the samples are kept even about ``theta1 = 0`` so that
    only cosine modes are present.
    """

    def __init__(self, values, symmetric=False):
        values = np.array(values, dtype=float)
        if values.ndim != 1 or values.size < 4 or values.size % 2:
            raise ValueError("CircleField needs an even number (>= 4) of samples")
        if symmetric:
            values = 0.5 * (values + np.roll(values[::-1], 1))
        self.values = values
        self.symmetric = bool(symmetric)

    @staticmethod
    def nodes(N):
        return 2.0 * np.pi * np.arange(N) / N

    @classmethod
    def from_function(cls, f, N, symmetric=False):
        return cls(f(cls.nodes(N)), symmetric=symmetric)

    @classmethod
    def constant(cls, c, N, symmetric=True):
        return cls(np.full(N, float(c)), symmetric=symmetric)

    @classmethod
    def from_cosines(cls, coeffs, N):
        """Field ``sum_k a_k cos(k theta)``."""
        th = cls.nodes(N)
        vals = sum(a * np.cos(k * th) for k, a in enumerate(coeffs))
        return cls(vals, symmetric=True)

    @property
    def N(self):
        return self.values.size

    @property
    def theta(self):
        return self.nodes(self.N)

    def coefficients(self):
        """Real Fourier coefficients ``(a_k, b_k)`` with ``f = sum a_k cos + b_k sin``."""
        c = np.fft.rfft(self.values) / self.N
        a = 2.0 * c.real
        b = -2.0 * c.imag
        a[0] *= 0.5
        if self.N % 2 == 0:
            a[-1] *= 0.5
        return a, b

    def cosine_coefficients(self):
        return self.coefficients()[0]

    def evaluate(self, theta):
        return fourier_interp(self.values, theta)

    def derivative(self, m=1):
        # odd derivatives of an even field are odd
        return CircleField(fourier_diff(self.values, m), symmetric=False)

    def reflect(self):
        """``f(-theta)``."""
        return CircleField(np.roll(self.values[::-1], 1), symmetric=self.symmetric)

    def _wrap(self, values, other=None):
        sym = self.symmetric and (other is None or getattr(other, "symmetric", True))
        return CircleField(values, symmetric=sym)

    def __add__(self, other):
        if isinstance(other, CircleField):
            return self._wrap(self.values + other.values, other)
        return self._wrap(self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, CircleField):
            return self._wrap(self.values - other.values, other)
        return self._wrap(self.values - other)

    def __rsub__(self, other):
        return self._wrap(other - self.values)

    def __neg__(self):
        return self._wrap(-self.values)

    def __mul__(self, other):
        if isinstance(other, CircleField):
            vals = dealiased_product(self.values, other.values)
            sym = self.symmetric and other.symmetric
            return CircleField(vals, symmetric=sym)
        return self._wrap(self.values * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, CircleField):
            return self * CircleField(1.0 / other.values, symmetric=other.symmetric)
        return self._wrap(self.values / other)

    def sup(self):
        return float(np.max(np.abs(self.values)))

    def energy(self):
        """Mean square on the grid (equals coefficient energy by Parseval)."""
        return float(np.mean(self.values**2))

    def truncation_estimate(self):
        """Relative size of the top quarter of the spectrum."""
        c = np.abs(np.fft.rfft(self.values))
        top = c[3 * c.size // 4:]
        return float(np.max(top) / max(np.max(c), 1e-300))

    def resample(self, N):
        """Band-limited interpolation onto ``N`` nodes."""
        return CircleField(self.evaluate(self.nodes(N)), symmetric=self.symmetric)

    def to_dict(self):
        a, b = self.coefficients()
        out = {"N": self.N, "symmetric": self.symmetric, "cos": a.tolist()}
        if not self.symmetric:
            out["sin"] = b.tolist()
        return out

    def __repr__(self):
        return f"CircleField(N={self.N}, symmetric={self.symmetric})"


def dealiased_product(a, b):
    """Pointwise product of two periodic sample vectors with the 3/2 rule."""
    n = a.size
    m = 3 * n // 2
    m += m % 2
    ap = _pad(a, m)
    bp = _pad(b, m)
    return _truncate(ap * bp, n)


def _pad(values, m):
    n = values.size
    c = np.fft.rfft(values)
    out = np.zeros(m // 2 + 1, dtype=complex)
    out[: n // 2] = c[: n // 2]
    out[n // 2] = 0.5 * c[n // 2]  # split the Nyquist mode
    return np.fft.irfft(out, n=m) * (m / n)


def _truncate(values, n):
    m = values.size
    c = np.fft.rfft(values)
    out = c[: n // 2 + 1].copy()
    out[n // 2] = out[n // 2].real * 2.0 if m > n else out[n // 2]
    return np.fft.irfft(out, n=n) * (n / m)


def _coef(shape, N, fn, symmetric=True):
    return CircleField(fn(jet(shape, CircleField.nodes(N))), symmetric=symmetric)


def laplace_beltrami(shape, field):
    """``(1/sqrt g) d1 (sqrt g g^11 d1 f)`` for a field depending on ``theta1`` only."""
    N = field.N
    th = CircleField.nodes(N)
    rho = CircleField(_rho(shape, th), symmetric=True)
    flux = field.derivative() * (rho / shape.r)
    out = flux.derivative() * CircleField(1.0 / (shape.r * _rho(shape, th)), symmetric=True)
    return CircleField(out.values, symmetric=field.symmetric)


def covariant_forms(shape, phi, psi):
    """Covariant pairings of two rotationally symmetric fields.

    Returns a dict of CircleFields:

    ``A_grad``   (A grad phi, grad psi)
    ``A_hess``   <A, hess phi> = A^ij (phi_ij - Gamma^k_ij phi_k)
    ``grad_dot`` (grad phi, grad psi)
    ``grad_sq``  |grad phi|^2
    """
    N = phi.N
    J = jet(shape, CircleField.nodes(N))
    r = shape.r
    rho = _rho(shape, J.theta1)
    A11_up = J.k1 / r**2
    A22_up = J.k2 / rho**2
    G1_22 = J.christoffel[..., 0, 1, 1]
    d1p, d2p = phi.derivative(), phi.derivative(2)
    d1q = psi.derivative()
    sym = phi.symmetric and psi.symmetric
    ginv = CircleField(np.full(N, 1.0 / r**2), symmetric=True)
    grad_dot = ginv * (d1p * d1q)
    A_grad = CircleField(A11_up, symmetric=True) * (d1p * d1q)
    A_hess = (CircleField(A11_up, symmetric=True) * d2p
              - CircleField(A22_up * G1_22, symmetric=False) * d1p)
    grad_sq = ginv * (d1p * d1p)
    return {
        "A_grad": CircleField(A_grad.values, symmetric=sym),
        "A_hess": CircleField(A_hess.values, symmetric=phi.symmetric),
        "grad_dot": CircleField(grad_dot.values, symmetric=sym),
        "grad_sq": CircleField(grad_sq.values, symmetric=phi.symmetric),
    }


def a1_route(shape, psi):
    """``a1^ij psi_ij + b1^i psi_i`` with ``a1 = 2 A^ij`` and
    ``b1^i = 2 d_j A^ij + 2 Gamma^k_kj A^ij - g^ij d_j H``."""
    N = psi.N
    J = jet(shape, CircleField.nodes(N))
    r = shape.r
    A11_up = J.k1 / r**2
    dA11_up = np.zeros(N)
    trace_gamma = J.christoffel[..., 0, 0, 0] + J.christoffel[..., 1, 1, 0]
    b1 = 2.0 * dA11_up + 2.0 * trace_gamma * A11_up - J.dH / r**2
    return (CircleField(2.0 * A11_up, symmetric=True) * psi.derivative(2)
            + CircleField(b1, symmetric=False) * psi.derivative())


def willmore_residual(shape, N=64):
    """``-Lap H + H (H^2 - 2|A|^2)/2`` as a symmetric CircleField."""
    J = jet(shape, CircleField.nodes(N))
    H = CircleField(J.H, symmetric=True)
    return -laplace_beltrami(shape, H) + CircleField(0.5 * J.H * (J.H**2 - 2.0 * J.absA2),
                                                      symmetric=True)


def geometry_field(shape, N, name, symmetric=True):
    """A jet entry (``H``, ``absA2``, ``trA3``, ``K``, ``dH`` ...) as a CircleField."""
    J = jet(shape, CircleField.nodes(N))
    return CircleField(np.asarray(getattr(J, name)), symmetric=symmetric)


def surface_integral(shape, field):
    """``int f dsigma = 2 pi int_0^{2 pi} f (R + r cos t1) r dt1`` (unit scale)."""
    N = field.N
    w = _rho(shape, CircleField.nodes(N)) * shape.r
    return float(2.0 * np.pi * (2.0 * np.pi / N) * np.sum(field.values * w))
