"""One-dimensional heteroclinic machinery.

The odd monotone profile ``v`` solving ``-v'' + W'(v) = 0`` with ``v(+-inf) = +-1``,
the odd correction ``eta`` with ``L eta = t v'/2`` (``L w = -w'' + W''(v) w``),
the constants ``c_star = int v'^2``, ``b_star = int v''^2`` and ``d = -4 b_star/c_star``,
the projection identities used by the reduction, and exponentially weighted
sup norms.

The profile is built from the first integral ``v' = sqrt(2 W(v))``. Writing
``1 - v = exp(-S)`` turns the time map ``t(v) = int_0^v dnu / sqrt(2 W(nu))`` into
the integral of a smooth bounded function of ``S``, which is tabulated with
Gauss-Legendre panels and inverted by monotone cubic interpolation followed
by a Newton polish.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import simpson
from scipy.interpolate import PchipInterpolator

from ._numerics import cumulative_integral, diff_matrix

__all__ = [
    "DoubleWell",
    "ProfileTable",
    "solve_heteroclinic",
    "build_eta",
    "profile_constants",
    "verify_identities",
    "weighted_sup_norm",
    "eta_residuals",
    "ode_residual",
    "default_half_width",
]


class DoubleWell:
    """Even double-well potential ``W(u) = (1 - u^2)^2 P(u^2)`` with ``P > 0``.

    Parameters
    ----------
    coeffs : sequence of float
        Coefficients of ``W`` as a polynomial in ``s = u^2`` (lowest degree first).
        ``W`` must have a double zero at ``s = 1`` and be positive elsewhere on
        ``[0, 1)``.
    label : str
        Free-form name stored in reports.
    """

    def __init__(self, coeffs, label="even-polynomial"):
        coeffs = np.asarray(coeffs, dtype=float)
        ws = Polynomial(coeffs)
        q2 = Polynomial([1.0, -2.0, 1.0])  # (1 - s)^2
        P, rem = divmod(ws, q2)
        scale = max(1.0, float(np.abs(coeffs).max()))
        if rem.coef.size and np.abs(rem.coef).max() > 1e-12 * scale:
            raise ValueError("W must vanish to second order at u = +-1")
        s = np.linspace(0.0, 1.0, 2001)
        if np.any(P(s) <= 0.0):
            raise ValueError("W is not a double well: sign violation on (-1, 1)")
        self.label = label
        self.coeffs = coeffs
        self._P = P
        # W as a polynomial in u: substitute s = u^2
        cu = np.zeros(2 * coeffs.size - 1)
        cu[::2] = coeffs
        self._W = [Polynomial(cu)]
        for _ in range(4):
            self._W.append(self._W[-1].deriv())

    @classmethod
    def quartic(cls):
        """``W(u) = (1 - u^2)^2 / 4``."""
        return cls([0.25, -0.5, 0.25], label="quartic")

    @classmethod
    def from_factor(cls, p_coeffs, label="even-polynomial"):
        """Build ``(1 - u^2)^2 P(u^2)`` from the coefficients of ``P``."""
        P = Polynomial(np.asarray(p_coeffs, dtype=float))
        ws = P * Polynomial([1.0, -2.0, 1.0])
        return cls(ws.coef, label=label)

    def evaluate(self, u):
        """Return the tuple ``(W, W', W'', W''', W'''')`` at ``u``."""
        u = np.asarray(u, dtype=float)
        return tuple(p(u) for p in self._W)

    def deriv(self, u, k):
        return self._W[k](np.asarray(u, dtype=float))

    def sqrt_2w_from_gap(self, x):
        """``sqrt(2 W(1 - x))`` evaluated without cancellation for small ``x >= 0``."""
        x = np.asarray(x, dtype=float)
        q = x * (2.0 - x)
        return q * np.sqrt(2.0 * self._P((1.0 - x) ** 2))

    @property
    def curvature_at_well(self):
        """``W''(1)``."""
        return float(self._W[2](1.0))

    @property
    def decay_rate(self):
        return float(np.sqrt(self.curvature_at_well))

    def to_dict(self):
        return {"label": self.label, "coeffs_in_u2": [float(c) for c in self.coeffs]}


@dataclass(frozen=True)
class ProfileTable:
    """Profile, correction and constants on a symmetric uniform grid."""

    well: DoubleWell
    t: np.ndarray
    v: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    v4: np.ndarray
    decay_rate: float
    eta: np.ndarray | None = None
    eta1: np.ndarray | None = None
    eta2: np.ndarray | None = None
    c_star: float = float("nan")
    b_star: float = float("nan")
    d_const: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def h(self):
        return float(self.t[1] - self.t[0])

    @property
    def half_width(self):
        return float(self.t[-1])

    @property
    def n(self):
        return int(self.t.size)

    def header(self):
        return {
            "c_star": self.c_star,
            "b_star": self.b_star,
            "d_const": self.d_const,
            "decay_rate": self.decay_rate,
            "T": self.half_width,
            "n": self.n,
            "well": self.well.to_dict(),
        }

    def to_csv(self, path):
        cols = [self.t, self.v, self.v1, self.v2, self.v3]
        names = ["t", "v", "v1", "v2", "v3"]
        if self.eta is not None:
            cols += [self.eta, self.eta1, self.eta2]
            names += ["eta", "eta1", "eta2"]
        np.savetxt(path, np.column_stack(cols), delimiter=",",
                   header=",".join(names), comments="", fmt="%.17e")


def default_half_width(well):
    return max(12.0, 8.0 / well.decay_rate)


class _TimeMap:
    """Tabulated ``t(S)`` for ``1 - v = exp(-S)`` with pointwise refinement."""

    _GL_X, _GL_W = np.polynomial.legendre.leggauss(20)

    def __init__(self, well, s_max, panels=None):
        self.well = well
        panels = panels or max(64, int(np.ceil(s_max / 0.25)))
        self.nodes = np.linspace(0.0, s_max, panels + 1)
        inc = self._integral(self.nodes[:-1], self.nodes[1:])
        self.tvals = np.concatenate([[0.0], np.cumsum(inc)])
        if not np.all(np.isfinite(self.tvals)) or np.any(np.diff(self.tvals) <= 0):
            raise ArithmeticError("time-map quadrature failed to converge")
        self._inverse = PchipInterpolator(self.tvals, self.nodes)

    def rate(self, s):
        """``dt/dS``, smooth and bounded: ``exp(-S) / sqrt(2 W(1 - exp(-S)))``."""
        x = np.exp(-s)
        q = 2.0 - x
        return 1.0 / (q * np.sqrt(2.0 * self.well._P((1.0 - x) ** 2)))

    def _integral(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        pts = mid[..., None] + half[..., None] * self._GL_X
        return half * (self.rate(pts) @ self._GL_W)

    def t_of_s(self, s):
        s = np.asarray(s, dtype=float)
        k = np.clip(np.searchsorted(self.nodes, s) - 1, 0, self.nodes.size - 2)
        return self.tvals[k] + self._integral(self.nodes[k], s)

    def s_of_t(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t > self.tvals[-1]) or np.any(t < 0):
            raise ValueError("time outside tabulated range")
        s = self._inverse(t)
        for _ in range(6):
            ds = (self.t_of_s(s) - t) / self.rate(s)
            s = s - ds
            if np.max(np.abs(ds)) < 1e-15 * max(1.0, float(np.max(s))):
                break
        return s


def _profile_values(well, tabs):
    """``(v, v')`` at nonnegative times, accurate near the wells."""
    s_max = well.decay_rate * float(np.max(tabs)) + 12.0
    tm = _TimeMap(well, s_max)
    s = tm.s_of_t(tabs)
    x = np.exp(-s)
    v = -np.expm1(-s)
    vp = well.sqrt_2w_from_gap(x)
    return v, vp


def evaluate_profile(well, t):
    """Profile values and derivatives ``(v, v', v'', v''', v'''')`` at arbitrary ``t``."""
    t = np.asarray(t, dtype=float)
    sign = np.sign(t)
    va, vp = _profile_values(well, np.abs(t))
    v = sign * va
    W1 = well.deriv(v, 1)
    W2 = well.deriv(v, 2)
    W3 = well.deriv(v, 3)
    v2 = W1
    v3 = W2 * vp
    v4 = W3 * vp**2 + W2 * W1
    return v, vp, v2, v3, v4


def solve_heteroclinic(well, half_width=None, node_count=4097):
    """Tabulate the heteroclinic profile on ``[-half_width, half_width]``.

    Parameters
    ----------
    well : DoubleWell
    half_width : float, optional
        Defaults to ``max(12, 8 / decay_rate)``.
    node_count : int
        Odd, so that ``t = 0`` is a node.

    Returns
    -------
    ProfileTable
        With ``c_star``, ``b_star`` and ``d_const`` filled; ``eta`` is left empty
        (see :func:`build_eta`).
    """
    if half_width is None:
        half_width = default_half_width(well)
    if node_count % 2 == 0:
        raise ValueError("node_count must be odd so that t = 0 is a node")
    if half_width < 8.0 / well.decay_rate - 1e-12:
        raise ValueError("half_width must be at least 8 / decay_rate")
    t = np.linspace(-half_width, half_width, node_count)
    t[node_count // 2] = 0.0
    v, v1, v2, v3, v4 = evaluate_profile(well, t)
    table = ProfileTable(well=well, t=t, v=v, v1=v1, v2=v2, v3=v3, v4=v4,
                         decay_rate=well.decay_rate)
    c, b, d = profile_constants(table)
    return _replace(table, c_star=c, b_star=b, d_const=d)


def _replace(table, **kw):
    from dataclasses import replace
    return replace(table, **kw)


def profile_constants(profile):
    """``(c_star, b_star, d)`` by composite Simpson quadrature on the grid."""
    c = float(simpson(profile.v1**2, x=profile.t))
    b = float(simpson(profile.v2**2, x=profile.t))
    return c, b, -4.0 * b / c


def build_eta(profile):
    """Fill the odd decaying correction ``eta`` and its first two derivatives.

    With ``eta = v' g`` the equation ``L eta = t v'/2`` becomes
    ``(v'^2 g')' = -t v'^2 / 2``; the decaying odd solution has
    ``g'(s) = v'(s)^-2 int_s^inf tau v'(tau)^2 / 2 dtau``. The ratio
    ``K = g'`` is accumulated from the far end with the factor
    ``(v'(tau)/v'(s))^2 <= 1`` applied cell by cell, so the growth of ``v'^-2``
    never appears on its own.
    """
    t, v1 = profile.t, profile.v1
    n = t.size
    mid = n // 2
    h = profile.h
    tp = t[mid:]
    vp = v1[mid:]
    logvp = np.log(vp)
    lam = profile.decay_rate
    T = tp[-1]
    m = tp.size
    # per-cell integrals of tau * exp(2 (log v'(tau) - log v'(s_i))) / 2 over [s_i, s_{i+1}]
    order = 8
    nodes = np.arange(order, dtype=float)
    V = np.vander(nodes, order, increasing=True).T
    K = np.empty(m)
    K[-1] = 0.5 * (T / (2 * lam) + 1.0 / (4 * lam**2))
    weights = {}
    for i in range(m - 2, -1, -1):
        lo = min(max(i - order // 2 + 1, 0), m - order)
        key = i - lo
        if key not in weights:
            mom = np.array([((key + 1) ** (k + 1) - key ** (k + 1)) / (k + 1)
                            for k in range(order)])
            weights[key] = np.linalg.solve(V, mom)
        idx = slice(lo, lo + order)
        vals = 0.5 * tp[idx] * np.exp(2.0 * (logvp[idx] - logvp[i]))
        cell = h * (vals @ weights[key])
        K[i] = K[i + 1] * np.exp(2.0 * (logvp[i + 1] - logvp[i])) + cell
    if not np.all(np.isfinite(K)):
        raise ArithmeticError("overflow in the eta integrand")
    g = cumulative_integral(K, h)
    eta_p = vp * g
    eta1_p = profile.v2[mid:] * g + K * vp
    eta = np.concatenate([-eta_p[:0:-1], eta_p])
    eta1 = np.concatenate([eta1_p[:0:-1], eta1_p])
    W2 = profile.well.deriv(profile.v, 2)
    eta2 = W2 * eta - 0.5 * t * v1
    return _replace(profile, eta=eta, eta1=eta1, eta2=eta2)


def _stride_for(profile, target_h=0.02):
    half = (profile.n - 1) // 2
    s = max(1, int(round(target_h / profile.h)))
    while s > 1 and half % s:
        s -= 1
    return s


def ode_residual(profile, margin=8):
    """Max of ``|-v'' + W'(v)|`` with ``v''`` from 8th-order differences of ``v``."""
    D2 = diff_matrix(profile.n, profile.h, 2)
    r = -(D2 @ profile.v) + profile.well.deriv(profile.v, 1)
    return float(np.max(np.abs(r[margin:-margin])))


def first_integral_residual(profile):
    """Max of ``|v'^2/2 - W(v)|``."""
    return float(np.max(np.abs(0.5 * profile.v1**2 - profile.well.deriv(profile.v, 0))))


def eta_residuals(profile, margin=12):
    """``(max|L eta - t v'/2|, max|L^2 eta + v''|)`` from finite differences of ``eta``.

    Differences are taken on a subsampled grid (spacing near 0.02) to keep the
    fourth-order roundoff floor well below the tolerances.
    """
    s = _stride_for(profile)
    t = profile.t[::s]
    h = t[1] - t[0]
    eta = profile.eta[::s]
    v = profile.v[::s]
    v1 = profile.v1[::s]
    v2 = profile.v2[::s]
    W2 = profile.well.deriv(v, 2)
    D2 = diff_matrix(t.size, h, 2)
    L_eta = -(D2 @ eta) + W2 * eta
    r1 = L_eta - 0.5 * t * v1
    L2_eta = -(D2 @ L_eta) + W2 * L_eta
    r2 = L2_eta + v2
    sl = slice(2 * margin, -2 * margin)
    return float(np.max(np.abs(r1[sl]))), float(np.max(np.abs(r2[sl])))


def verify_identities(profile):
    """Residuals of the five projection identities.

    Returns a dict with entries ``int1`` .. ``int5`` (absolute residuals) and
    ``int2_literal``, the undifferentiated pairing ``int (L eta) v'``, which
    vanishes by self-adjointness of ``L`` and ``L v' = 0``.
    """
    if profile.eta is None:
        profile = build_eta(profile)
    t, v1 = profile.t, profile.v1
    well = profile.well
    c = profile.c_star
    D1 = diff_matrix(profile.n, profile.h, 1)
    W2 = well.deriv(profile.v, 2)
    W3 = well.deriv(profile.v, 3)
    L_eta = -profile.eta2 + W2 * profile.eta
    # L eta is evaluated from the tabulated eta'' and differentiated once
    dL_eta = D1 @ L_eta
    eta3 = D1 @ profile.eta2
    L_eta1 = -eta3 + W2 * profile.eta1
    eta2_fd = D1 @ profile.eta1
    L_eta_fd = -eta2_fd + W2 * profile.eta

    def integ(f):
        return float(simpson(f, x=t))

    res = {
        "int1": abs(integ(t * profile.v2 * v1) + 0.5 * c),
        "int2": abs(integ(dL_eta * v1) - 0.25 * c),
        "int3": abs(integ(L_eta1 * v1)),
        "int4": abs(integ(W3 * profile.eta * v1**2) - 0.25 * c),
        "int5": abs(integ((t * profile.v4 - t * W2 * profile.v2 + 2 * profile.v3) * v1)),
        "int2_literal": integ(L_eta_fd * v1),
    }
    return res


def weighted_sup_norm(values, t, delta, decay_rate):
    """``max |f(t)| (1 + e^t)^delta (1 + e^-t)^delta`` over the nodes.

    ``delta`` must lie in ``(0, decay_rate)``.
    """
    if not (0.0 < delta < decay_rate):
        raise ValueError("delta must satisfy 0 < delta < decay_rate")
    t = np.asarray(t, dtype=float)
    logw = delta * (np.logaddexp(0.0, t) + np.logaddexp(0.0, -t))
    return float(np.max(np.abs(values) * np.exp(logw)))
