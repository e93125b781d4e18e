"""Heteroclinic profiles for two wells and the constants the reduction uses.

    python demos/profile_and_constants.py
"""
import numpy as np

from cliffordch.profile import (DoubleWell, build_eta, eta_residuals, profile_constants,
                                solve_heteroclinic, verify_identities)

wells = {
    "quartic": DoubleWell.quartic(),
    # (1 - u^2)^2 (1 + u^2) / 4, still even with nondegenerate minima
    "sextic": DoubleWell.from_factor([0.25, 0.25]),
}

for name, well in wells.items():
    prof = build_eta(solve_heteroclinic(well))
    c_star, b_star, d = profile_constants(prof)
    ids = verify_identities(prof)
    print(f"{name:8s} decay={well.decay_rate:.4f}  c*={c_star:.10f}  "
          f"b*={b_star:.10f}  d={d:.8f}")
    print("         identity residuals:", " ".join(f"{ids[k]:.1e}" for k in ("int1", "int2", "int3", "int4", "int5")))
    r1, r2 = eta_residuals(prof)
    print(f"         eta residuals: {r1:.1e} {r2:.1e}")

q = solve_heteroclinic(wells["quartic"])
t = q.t
mask = np.abs(t) <= 10
print("\nquartic vs tanh(t/sqrt2) on |t|<=10:",
      f"{np.max(np.abs(q.v[mask] - np.tanh(t[mask] / np.sqrt(2)))):.2e}")
print("closed forms: c* = 2sqrt2/3 =", 2 * np.sqrt(2) / 3, " b* = 4sqrt2/15 =", 4 * np.sqrt(2) / 15)
