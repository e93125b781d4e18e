"""Small numerical kernels shared by the modules.

Finite-difference weights, banded derivative matrices on uniform grids,
high-order cumulative integration, Fourier differentiation and log-log fits.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def fd_weights(offsets, deriv):
    """Weights ``w`` with ``sum w_k f(x + offsets_k h) ~ h**deriv f^(deriv)(x)``.

    Solves the transposed Vandermonde system, which is well conditioned for
    the short stencils used here (at most 11 points).
    """
    offsets = np.asarray(offsets, dtype=float)
    n = offsets.size
    if deriv >= n:
        raise ValueError("stencil too short for the requested derivative")
    V = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[deriv] = float(np.prod(np.arange(1, deriv + 1)))
    return np.linalg.solve(V, rhs)


def diff_matrix(n, h, deriv, order=8):
    """Sparse matrix of the ``deriv``-th derivative on ``n`` uniform nodes.

    Interior rows use the centred stencil of the given (even) order; rows
    near the ends use one-sided stencils of the same formal order.
    """
    half = order // 2 + (deriv - 1) // 2
    width = 2 * half + 1
    if n < width + 2:
        raise ValueError("grid too small for the stencil")
    centred = fd_weights(np.arange(-half, half + 1), deriv)
    rows, cols, vals = [], [], []
    side = order + deriv
    for i in range(n):
        if half <= i < n - half:
            idx = np.arange(i - half, i + half + 1)
            w = centred
        else:
            lo = 0 if i < half else n - side
            idx = np.arange(lo, lo + side)
            w = fd_weights(idx - i, deriv)
        rows.extend([i] * idx.size)
        cols.extend(idx.tolist())
        vals.extend(w.tolist())
    D = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return D / h**deriv


def cumulative_integral(f, h, order=8):
    """Running integral ``F_i = int_{x_0}^{x_i} f`` on a uniform grid.

    Each cell is integrated exactly against the degree ``order - 1``
    interpolant through ``order`` neighbouring nodes, so the error is smooth
    across the grid (no odd/even oscillation as with cumulative Simpson).
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[-1]
    p = order
    if n < p:
        raise ValueError("grid too small")
    cache = {}
    cells = np.empty(f.shape[:-1] + (n - 1,))
    for i in range(n - 1):
        lo = min(max(i - p // 2 + 1, 0), n - p)
        key = i - lo
        if key not in cache:
            # integral over [key, key+1] of the Lagrange basis on nodes 0..p-1
            nodes = np.arange(p, dtype=float)
            V = np.vander(nodes, p, increasing=True).T
            moments = np.array([((key + 1) ** (k + 1) - key ** (k + 1)) / (k + 1)
                                for k in range(p)])
            cache[key] = np.linalg.solve(V, moments)
        cells[..., i] = f[..., lo:lo + p] @ cache[key]
    out = np.zeros_like(f)
    out[..., 1:] = np.cumsum(cells, axis=-1) * h
    return out


def fourier_wavenumbers(n):
    return np.fft.rfftfreq(n, d=1.0 / n)


def fourier_diff(values, m=1, axis=-1):
    """Spectral ``m``-th derivative of periodic samples on ``[0, 2 pi)``."""
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    k = fourier_wavenumbers(n)
    c = np.fft.rfft(values, axis=axis)
    mult = (1j * k) ** m
    if n % 2 == 0 and m % 2 == 1:
        mult[-1] = 0.0
    shape = [1] * values.ndim
    shape[axis] = k.size
    return np.fft.irfft(c * mult.reshape(shape), n=n, axis=axis)


def fourier_interp(values, theta):
    """Evaluate the trigonometric interpolant of periodic samples at ``theta``."""
    values = np.asarray(values, dtype=float)
    n = values.size
    c = np.fft.rfft(values) / n
    k = fourier_wavenumbers(n)
    theta = np.asarray(theta, dtype=float)
    w = np.full(k.size, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    phase = np.exp(1j * np.multiply.outer(theta, k))
    return np.real(phase @ (w * c))


def fit_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    slope, _ = np.polyfit(lx, ly, 1)
    return float(slope)


def fit_slope_robust(x, y):
    """Log-log slope, dropping the largest ``x`` if it sits off the line.

    The largest abscissa is excluded when its residual from the fit through
    the remaining points exceeds twice their residual spread.
    Returns ``(slope, used_mask)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = np.ones(x.size, dtype=bool)
    if x.size >= 4:
        big = int(np.argmax(x))
        rest = np.arange(x.size) != big
        lx, ly = np.log(x), np.log(y)
        coef = np.polyfit(lx[rest], ly[rest], 1)
        res = ly[rest] - np.polyval(coef, lx[rest])
        sigma = max(float(np.std(res, ddof=1)), 1e-3)
        if abs(ly[big] - np.polyval(coef, lx[big])) > 2.0 * sigma:
            mask = rest
    return fit_slope(x[mask], y[mask]), mask
