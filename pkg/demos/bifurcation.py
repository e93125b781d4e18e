"""Solve the reduced problem for a few eps and watch phi scale like eps.

Takes about 20 s at the default resolution.

    python demos/bifurcation.py [--trace]
"""
import sys

from cliffordch._numerics import fit_slope
from cliffordch.reduction import BifurcationConfig, solve_bifurcation

show_trace = "--trace" in sys.argv
states = []
for eps in (0.1, 0.07, 0.05):
    st = solve_bifurcation(eps, BifurcationConfig())
    states.append(st)
    s = st.summary()
    print(f"eps={eps:.3f} converged={s['converged']} in {s['iterations']:2d} steps  "
          f"|phi|/eps={s['phi_sup_over_eps']:.3f}  lambda={s['lambda']:+.4f}  "
          f"vol_res={s['vol_residual']:.1e}  |U_odd|/eps^4={s['U_odd_over_eps4']:.1f}  "
          f"|p4|/eps^5={s['p4_over_eps5']:.1f}")
    print("          cos coefficients of phi/eps:",
          " ".join(f"{c / eps:+.3f}" for c in s["phi_cosines"][:4]))
    if show_trace:
        for rec in st.trace:
            print(f"    it {rec['iter']:2d} update {rec['update_norm']:.2e} "
                  f"inner {rec['inner_update']:.2e} omega {rec['omega']:.3f}")

eps = [s.eps for s in states]
print(f"\n|lambda| decays with slope {fit_slope(eps, [abs(s.lam) for s in states]):.2f} in eps")
