"""Command-line front end.

Every subcommand writes one JSON artifact (stdout unless ``--out``) holding
``config``, ``versions``, ``grid``, ``timing``, ``results`` and ``checks``.
Curves go to CSV with ``--csv``. Exit codes: 0 ok, 1 a check failed,
2 usage or config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
import time

import numpy as np
import scipy

from . import __version__
from ._numerics import fit_slope, fit_slope_robust

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

COMMANDS = ("profile", "geometry", "willmore", "expansion", "residual", "project", "inner",
            "volume", "solve", "sweep", "all")

DEFAULTS = {
    "well": "quartic",
    "well_coeffs": None,
    "shape": "clifford",
    "R": None,
    "r": None,
    "eps": 0.05,
    "eps_list": [0.1, 0.07, 0.05, 0.035],
    "tau": None,
    "modes": 64,
    "h": 0.05,
    "half_width": None,
    "t_nodes": 4097,
    "tol": 1e-8,
    "max_iter": 30,
    "criteria": None,
    "out": None,
    "csv": None,
    "trace": None,
    "timing": False,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from exc


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from exc


def build_parser():
    p = _Parser(prog="cliffordch", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="TOML file; flags given on the command line win")
    p.add_argument("--well", choices=("quartic", "poly"), default=None)
    p.add_argument("--well-coeffs", type=_float_list, default=None,
                   help="coefficients of W in s = u^2, lowest first (with --well poly)")
    p.add_argument("--shape", choices=("clifford", "torus"), default=None)
    p.add_argument("--R", type=float, default=None, help="centre radius (with --shape torus)")
    p.add_argument("--r", type=float, default=None, help="tube radius (with --shape torus)")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--eps-list", type=_float_list, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--modes", type=int, default=None)
    p.add_argument("--h", type=float, default=None, help="t spacing of Fermi grids")
    p.add_argument("--half-width", type=float, default=None)
    p.add_argument("--t-nodes", type=int, default=None, help="profile table nodes (odd)")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--criteria", type=_int_list, default=None, help="subset for 'all'")
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None)
    p.add_argument("--trace", default=None, help="JSONL iteration trace (solve)")
    p.add_argument("--timing", action="store_true", default=None,
                   help="record wall time (artifacts are then no longer byte-identical)")
    return p


def load_config(args):
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                data = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        data = {k.replace("-", "_"): v for k, v in data.items()}
        unknown = sorted(set(data) - set(DEFAULTS))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(data)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["command"] = args.command
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg["well"] == "poly" and not cfg["well_coeffs"]:
        raise UsageError("--well poly needs --well-coeffs")
    if cfg["shape"] == "torus" and (cfg["R"] is None or cfg["r"] is None):
        raise UsageError("--shape torus needs --R and --r")
    for key in ("eps", "h", "tol"):
        if not float(cfg[key]) > 0:
            raise UsageError(f"{key} must be positive")
    if any(not e > 0 for e in cfg["eps_list"]):
        raise UsageError("eps-list entries must be positive")
    if int(cfg["modes"]) < 8 or int(cfg["modes"]) % 2:
        raise UsageError("modes must be an even integer >= 8")


def _well(cfg):
    from .profile import DoubleWell
    if cfg["well"] == "quartic":
        return DoubleWell.quartic()
    try:
        return DoubleWell(cfg["well_coeffs"], label="even-polynomial")
    except ValueError as exc:
        raise UsageError(f"invalid well: {exc}") from exc


def _shape(cfg):
    from .geometry import CLIFFORD, TorusShape
    if cfg["shape"] == "clifford":
        return CLIFFORD
    try:
        return TorusShape(float(cfg["R"]), float(cfg["r"]))
    except ValueError as exc:
        raise UsageError(f"invalid shape: {exc}") from exc


class Run:
    """Collects results, checks and the grid description of one subcommand."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.results = {}
        self.checks = []
        self.grid = {}

    def check(self, name, value, bound, kind="le"):
        value = float(value)
        ok = {"le": value <= bound, "ge": value >= bound}[kind]
        self.checks.append({"name": name, "value": value, "bound": float(bound),
                            "kind": kind, "passed": bool(ok)})

    def within(self, name, value, target, tol):
        value = float(value)
        self.checks.append({"name": name, "value": value, "target": float(target),
                            "tol": float(tol), "passed": bool(abs(value - target) <= tol)})

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) for x in row])


# -- subcommands ---------------------------------------------------------------

def cmd_profile(run):
    from .profile import (build_eta, eta_residuals, first_integral_residual, ode_residual,
                          solve_heteroclinic, verify_identities)
    cfg = run.cfg
    well = _well(cfg)
    p = build_eta(solve_heteroclinic(well, cfg["half_width"], int(cfg["t_nodes"])))
    r1, r2 = eta_residuals(p)
    ident = verify_identities(p)
    run.grid = {"T": p.half_width, "n": p.n, "h": p.h}
    run.results = {**p.header(), "ode_residual": ode_residual(p),
                   "first_integral_residual": first_integral_residual(p),
                   "eta_residuals": [r1, r2], "identities": ident}
    if well.label == "quartic":
        run.within("c_star", p.c_star, 2 * math.sqrt(2) / 3, 1e-8)
        run.within("b_star", p.b_star, 4 * math.sqrt(2) / 15, 1e-7)
        run.within("d", p.d_const, -1.6, 1e-7)
    for k in ("int1", "int2", "int3", "int4", "int5"):
        run.check(k, ident[k], 1e-7)
    run.check("L_eta", r1, 1e-7)
    run.check("L2_eta", r2, 1e-6)
    if cfg["csv"]:
        p.to_csv(cfg["csv"])


def cmd_geometry(run):
    from .geometry import CircleField, jet, laplace_beltrami
    shape = _shape(run.cfg)
    N = int(run.cfg["modes"])
    J = jet(shape, CircleField.nodes(N))
    lapH = laplace_beltrami(shape, CircleField(J.H, symmetric=True))
    run.grid = {"modes": N}
    run.results = {"shape": shape.to_dict(), "area": shape.area, "volume": shape.volume,
                   "H_at_0": float(J.H[0]), "absA2_at_0": float(J.absA2[0]),
                   "lap_H_at_0": float(lapH.values[0])}
    if shape.is_clifford:
        run.within("lap_H_at_0", lapH.values[0], 3 * math.sqrt(2) - 4, 1e-8)
    if run.cfg["csv"]:
        _write_csv(run.cfg["csv"], ["theta1", "H", "absA2", "K"],
                   zip(CircleField.nodes(N), J.H, J.absA2, J.K))


def cmd_willmore(run):
    from .geometry import willmore_residual
    from .willmore_op import apply_ltilde, kernel_fields, spectrum_report
    shape = _shape(run.cfg)
    N = int(run.cfg["modes"])
    res = willmore_residual(shape, N)
    run.grid = {"modes": N}
    run.results = {"shape": shape.to_dict(), "residual_sup": res.sup()}
    if shape.is_clifford:
        run.check("residual_sup", res.sup(), 1e-8)
        spectrum = spectrum_report(shape, N, symmetric=True)
        spectrum2 = spectrum_report(shape, 2 * N, symmetric=True)
        tr, dil = kernel_fields(N)
        run.results.update(
            sigma_min=spectrum["sigma_min_bordered"], sigma_min_doubled=spectrum2["sigma_min_bordered"],
            self_adjointness_defect=spectrum["self_adjointness_defect"],
            lowest_eigenvalues=spectrum["eigenvalues"][:6],
            kernel_translation=apply_ltilde(shape, tr).sup(),
            kernel_dilation=apply_ltilde(shape, dil).sup())
        s0, s1 = spectrum["sigma_min_bordered"], spectrum2["sigma_min_bordered"]
        run.check("sigma_min_relative_change", abs(s1 - s0) / s0, 0.01)
    if run.cfg["csv"]:
        _write_csv(run.cfg["csv"], ["theta1", "residual"], zip(res.theta, res.values))


def cmd_expansion(run):
    from .acceptance import _ambient_error, _d_remainder
    from .fermi import metric_expansion_report, remainder_report
    shape = _shape(run.cfg)
    N = int(run.cfg["modes"])
    rep = metric_expansion_report(shape, M=N)
    rem = remainder_report(shape, M=N)
    d_rem = _d_remainder()
    run.grid = {"modes": N}
    run.results = {"metric": rep, "coefficient_remainders": rem, "D_remainder": d_rem,
                   "D_remainder_slope": fit_slope_robust((0.1, 0.07, 0.05, 0.035), d_rem)[0],
                   "ambient_laplacian_error": _ambient_error()}
    run.within("metric_slope", rep["first_order_slope"], 2.0, 0.05)
    run.check("D_remainder_slope", run.results["D_remainder_slope"], 3.0, "ge")
    run.check("ambient_laplacian_error", run.results["ambient_laplacian_error"], 1e-5)


def _fermi_grid(cfg, eps, phi=None):
    from .fermi import FermiGrid
    return FermiGrid.build(eps, _shape(cfg), M=int(cfg["modes"]), h=float(cfg["h"]),
                           tau=cfg["tau"], phi=phi, half_width=cfg["half_width"])


def cmd_residual(run):
    from .phasefield import (assemble_global_v, assemble_vtilde, build_cutoffs, evaluate_F,
                             evaluate_Gamma)
    cfg = run.cfg
    well = _well(cfg)
    rows = []
    for e in cfg["eps_list"]:
        grid = _fermi_grid(cfg, e)
        cut = build_cutoffs(e, grid.tau)
        vt = assemble_vtilde(grid, well)
        inner = np.abs(grid.t) <= cut.inner_width
        n0 = float(np.abs(evaluate_F(grid, vt.base, well).values[:, inner]).max())
        n1 = float(np.abs(evaluate_F(grid, vt, well).values[:, inner]).max())
        _, gam = evaluate_Gamma(grid, cut, assemble_global_v(grid, cut, vt)[0], well)
        rows.append({"eps": e, "F_vstar": n0, "F_vtilde": n1, "Gamma_min": gam["min"],
                     "grid": grid.describe()})
    eps = [r["eps"] for r in rows]
    run.grid = {"grids": [r.pop("grid") for r in rows]}
    s0 = fit_slope_robust(eps, [r["F_vstar"] for r in rows])[0]
    s1 = fit_slope_robust(eps, [r["F_vtilde"] for r in rows])[0]
    run.results = {"rows": rows, "F_vstar_slope": s0, "F_vtilde_slope": s1}
    if len(eps) >= 2:
        run.within("F_vstar_slope", s0, 2.0, 0.3)
        run.within("F_vtilde_slope", s1, 3.0, 0.3)
    if cfg["csv"]:
        _write_csv(cfg["csv"], ["eps", "F_vstar", "F_vtilde", "Gamma_min"],
                   [[r["eps"], r["F_vstar"], r["F_vtilde"], r["Gamma_min"]] for r in rows])


def cmd_project(run):
    from .phasefield import assemble_vtilde, evaluate_F, project_residual
    cfg = run.cfg
    well = _well(cfg)
    rows, curve = [], None
    for e in cfg["eps_list"]:
        grid = _fermi_grid(cfg, e)
        q = project_residual(grid, evaluate_F(grid, assemble_vtilde(grid, well), well), well)
        rows.append({"eps": e, "q_sup": q.sup(), "grid": grid.describe()})
        if e == min(cfg["eps_list"]):
            curve = q
    eps = [r["eps"] for r in rows]
    run.grid = {"grids": [r.pop("grid") for r in rows]}
    slope, mask = fit_slope_robust(eps, [r["q_sup"] for r in rows])
    run.results = {"rows": rows, "q_slope": slope, "fit_mask": mask.tolist()}
    if len(eps) >= 2:
        run.check("q_slope", slope, 4.3, "ge")
    if well.label == "quartic" and _shape(cfg).is_clifford:
        from .acceptance import _linear_response
        rel = _linear_response(tuple(cfg["eps_list"]), int(cfg["modes"]))
        run.results["linear_response_relative"] = rel
        run.check("linear_response_max", max(rel), 0.5)
    if cfg["csv"] and curve is not None:
        _write_csv(cfg["csv"], ["theta1", "q"], zip(curve.theta, curve.values))


def cmd_inner(run):
    from .geometry import CircleField
    from .reduction import apply_inner, assemble_inner, project_out, solve_inner
    cfg = run.cfg
    op = assemble_inner(float(cfg["eps"]), _shape(cfg), _well(cfg), M=int(cfg["modes"]),
                        h=float(cfg["h"]), half_width=cfg["half_width"])
    th = CircleField.nodes(op.M)[:, None]
    t = op.t[None, :]
    U0 = project_out(op, (1 + 0.3 * np.cos(2 * th)) * np.exp(-t**2 / 2) * (1 + t))
    U, info = solve_inner(op, project_out(op, apply_inner(op, apply_inner(op, U0))),
                          squared=True)
    fo = project_out(op, np.cos(th) * t * np.exp(-t**2))
    Uo, _ = solve_inner(op, fo, squared=True)
    run.grid = {"M": op.M, "K": op.K, "h": op.h, "T": float(op.t[-1])}
    mu = op.t_spectrum(3)
    run.results = {"t_spectrum": mu.tolist(), "lb_eigenvalues": op.lam[:6].tolist(),
                   "kernel": op.kernel_report(), "manufactured_error": float(np.abs(U - U0).max()),
                   "parity_odd_defect": float(np.abs(Uo + Uo[:, ::-1]).max()),
                   "solve_info": info}
    if _well(cfg).label == "quartic":
        run.within("mu0", mu[0], 0.0, 1e-4)
        run.within("mu1", mu[1], 1.5, 1e-4)
    run.check("manufactured_error", run.results["manufactured_error"], 1e-7)
    run.check("parity_odd_defect", run.results["parity_odd_defect"], 1e-10)


def cmd_volume(run):
    from .geometry import CircleField
    from .reduction import (interior_volume, interior_volume_quadrature, mass_defect,
                            profile_tail_integral)
    cfg = run.cfg
    e = float(cfg["eps"])
    N = int(cfg["modes"])
    well = _well(cfg)
    zero = CircleField.constant(0.0, N)
    phi = CircleField.from_function(lambda x: e * (np.cos(x) - 0.8), N, symmetric=True)
    v0 = interior_volume(e, zero)
    exact = e**-3 * 2 * math.sqrt(2) * math.pi**2
    va = interior_volume(e, phi)
    vq = interior_volume_quadrature(e, phi)
    md0 = mass_defect(e, zero, well, cfg["tau"])
    md1 = mass_defect(e, phi, well, cfg["tau"])
    run.grid = {"modes": N}
    run.results = {"volume_phi0": v0, "volume_phi0_exact": exact, "volume_phi": va,
                   "volume_phi_quadrature": vq, "profile_integral": profile_tail_integral(well),
                   "mass_defect_phi0": md0, "mass_defect_phi": md1}
    run.check("volume_phi0_error", abs(v0 - exact), 1e-10)
    run.check("quadrature_relative", abs(va - vq) / va, 1e-6)
    if well.label == "quartic":
        run.check("profile_integral_error", abs(run.results["profile_integral"]
                                                - math.pi**2 / 12), 1e-8)


def _solve_one(cfg, e):
    from .reduction import BifurcationConfig, solve_bifurcation
    bc = BifurcationConfig(M=int(cfg["modes"]), h=float(cfg["h"]), tau=cfg["tau"],
                           max_iter=int(cfg["max_iter"]), tol=float(cfg["tol"]), well=_well(cfg))
    return solve_bifurcation(e, bc)


def _strip_seconds(summary):
    return {k: v for k, v in summary.items() if k != "seconds"}


def cmd_solve(run):
    cfg = run.cfg
    e = float(cfg["eps"])
    st = _solve_one(cfg, e)
    summary = st.summary()
    run.timing_extra = {"solve_seconds": summary.get("seconds")}
    summary = _strip_seconds(summary)
    run.grid = summary.pop("grid", {})
    run.results = {"state": summary, "phi": st.phi.values.tolist()}
    run.checks.append({"name": "converged", "value": bool(st.converged), "passed": bool(st.converged)})
    run.check("vol_residual", abs(summary.get("vol_residual", math.inf)), 1e-8)
    if cfg["trace"]:
        with open(cfg["trace"], "w") as fh:
            for rec in st.trace:
                fh.write(json.dumps(_clean(rec), sort_keys=True) + "\n")
    if cfg["csv"]:
        _write_csv(cfg["csv"], ["theta1", "phi"], zip(st.phi.theta, st.phi.values))


def cmd_sweep(run):
    cfg = run.cfg
    rows, grids, seconds = [], [], []
    for e in cfg["eps_list"]:
        s = _solve_one(cfg, e).summary()
        seconds.append(s.get("seconds"))
        s = _strip_seconds(s)
        grids.append(s.pop("grid", {}))
        rows.append(s)
    run.timing_extra = {"solve_seconds": seconds}
    run.grid = {"grids": grids}
    eps = [r["eps"] for r in rows]
    run.results = {"rows": rows}
    for r in rows:
        run.checks.append({"name": f"converged_{r['eps']}", "value": bool(r["converged"]),
                           "passed": bool(r["converged"])})
    ratios = [r["phi_sup_over_eps"] for r in rows]
    if len(rows) >= 2 and min(ratios) > 0:
        run.check("phi_sup_over_eps_spread", max(ratios) / min(ratios), 2.0)
        lam = [abs(r["lambda"]) for r in rows]
        run.results["lambda_slope"] = fit_slope(eps, lam) if min(lam) > 0 else None
    if cfg["csv"]:
        _write_csv(cfg["csv"], ["eps", "iterations", "lambda", "phi_sup_over_eps",
                                "vol_residual", "U_odd_over_eps4", "p4_over_eps5"],
                   [[r["eps"], r["iterations"], r["lambda"], r["phi_sup_over_eps"],
                     r["vol_residual"], r["U_odd_over_eps4"], r["p4_over_eps5"]] for r in rows])


def cmd_all(run):
    from .acceptance import run_checks
    results = run_checks(run.cfg["criteria"])
    run.results = {"criteria": [r.to_dict() for r in results]}
    run.timing_extra = {"criterion_seconds": {r.id: r.seconds for r in results}}
    for r in results:
        run.checks.append({"name": f"criterion_{r.id}", "value": r.passed, "passed": r.passed})
    run.table = "\n".join(r.line() for r in results)


HANDLERS = {name: globals()["cmd_" + name] for name in COMMANDS}


# -- output ----------------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays become Python, non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if hasattr(obj, "to_dict"):
        return _clean(obj.to_dict())
    return obj


def versions():
    return {"cliffordch": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _dump(obj):
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _error(kind, message, command=None, code=2):
    sys.stderr.write(_dump({"error": {"type": kind, "message": str(message),
                                      "command": command, "exit_code": code}}))
    return code


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if any(a in ("-h", "--help") for a in argv):
        parser.print_help()
        return 0
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args)
    except UsageError as exc:
        return _error("usage", exc)
    run = Run(cfg)
    t0 = time.perf_counter()
    try:
        HANDLERS[cfg["command"]](run)
    except UsageError as exc:
        return _error("usage", exc, cfg["command"])
    except (ArithmeticError, ValueError, np.linalg.LinAlgError, RuntimeError) as exc:
        return _error("numerical", f"{type(exc).__name__}: {exc}", cfg["command"], 3)
    timing = None
    if cfg["timing"]:
        timing = {"wall_seconds": time.perf_counter() - t0, **getattr(run, "timing_extra", {})}
    artifact = {"config": cfg, "versions": versions(), "grid": run.grid, "timing": timing,
                "results": run.results, "checks": run.checks, "passed": run.passed}
    text = _dump(artifact)
    if cfg["out"]:
        with open(cfg["out"], "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if cfg["command"] == "all":
        (sys.stderr if not cfg["out"] else sys.stdout).write(run.table + "\n")
    return 0 if run.passed else 1


if __name__ == "__main__":
    sys.exit(main())
