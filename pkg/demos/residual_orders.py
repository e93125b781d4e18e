"""How fast the fourth-order residual shrinks with eps.

The bare profile leaves an eps^2 residual; the eta correction removes it,
and projecting onto v*' removes two more orders at phi = 0.

    python demos/residual_orders.py
"""
import numpy as np

from cliffordch._numerics import fit_slope, fit_slope_robust
from cliffordch.fermi import FermiGrid
from cliffordch.phasefield import assemble_vtilde, build_cutoffs, evaluate_F, project_residual
from cliffordch.profile import DoubleWell

W = DoubleWell.quartic()
eps_list = (0.1, 0.07, 0.05, 0.035)
rows = []
for eps in eps_list:
    grid = FermiGrid.build(eps)
    vt = assemble_vtilde(grid, W)
    band = np.abs(grid.t) <= build_cutoffs(eps, grid.tau).inner_width
    F_bare = evaluate_F(grid, vt.base, W).values[:, band]
    F_corr = evaluate_F(grid, vt, W)
    q = project_residual(grid, F_corr, W)
    rows.append((np.abs(F_bare).max(), np.abs(F_corr.values[:, band]).max(), q.sup()))

print(f"{'eps':>6s} {'|F(v*)|':>11s} {'|F(v~)|':>11s} {'|q|':>11s}")
for eps, r in zip(eps_list, rows):
    print(f"{eps:6.3f} " + " ".join(f"{x:11.3e}" for x in r))

cols = list(zip(*rows))
for label, ys in zip(("F(v*)", "F(v~)", "q"), cols):
    s, used = fit_slope_robust(eps_list, ys)
    note = "" if used.all() else "  (largest eps dropped)"
    print(f"slope {label:6s} all points {fit_slope(eps_list, ys):.3f}   robust {s:.3f}{note}")
