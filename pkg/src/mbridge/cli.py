"""Command-line entry point.

Subcommands: solve (fixed point on two discrete measure files), gaussian
(closed forms and volatility schedules), simulate (path ensemble with
energies), filter (observation-time law checks), threepoint (the two
optimizers of the 3x3 family), certify (primal/dual/variational value chain
on one instance). Each run writes a JSON report plus CSV side files to the
output directory; every artifact embeds its run manifest. Artifacts contain
only reproducible fields, so identical invocations give byte-identical
files; wall-clock timing goes to stderr.

Exit codes: 0 success, 1 structural problems (bad flags, malformed files),
2 not converged or a failing law check, 3 infeasible inputs.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import FiberModel, phi_bijection_check, randomize_over_mu, \
    simulate_follmer_martingale
from .errors import DualDivergence, InfeasibleParameters, MbridgeError, \
    NotConverged, NotInConvexOrder, NotIrreducible, StructuralError
from .filtering import sigma_invariance_test, wonham_sde_crosscheck
from .gaussian import bass_comparison_gaussian, follmer_volatility_gaussian, \
    gaussian_energy_closed_form, gaussian_msb_closed_form, \
    weighted_energy_quadrature
from .measures import DiscreteMeasure, barycenter_and_moments, \
    gaussian_reference_identity_check, load_measure, mcov_discrete, \
    measure_to_json
from .solver import SolverConfig, classical_sinkhorn_sp, extract_base_measure, \
    schroedinger_system_residuals, sinkhorn_msb
from .threepoint import ThreePointInstance, bass_minimize, entropy_minimize

SCHEMA = "mbridge/1"
_INFEASIBLE = (NotInConvexOrder, NotIrreducible, InfeasibleParameters,
               DualDivergence)


class _Parser(argparse.ArgumentParser):
    """argparse with the structural-error exit convention."""

    def error(self, message):
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _manifest(args, command, inputs, parameters):
    return {"command": command,
            "inputs": _jsonable(inputs),
            "parameters": _jsonable(parameters),
            "seed": getattr(args, "seed", None),
            "version": __version__}


def _write_json(outdir, name, doc):
    path = Path(outdir) / name
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(doc), fh, indent=2)
        fh.write("\n")
    return path


def _write_csv(outdir, name, header, rows):
    path = Path(outdir) / name
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return path


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_discrete(path, flag):
    measure = load_measure(path)
    if not isinstance(measure, DiscreteMeasure):
        raise StructuralError(
            f"{flag} must be a discrete measure; "
            "Gaussian inputs belong to the gaussian subcommand")
    return measure


def _parse_matrix(text, flag):
    try:
        return [[float(text)]]
    except ValueError:
        pass
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StructuralError(f"field '{flag}' is neither a number nor "
                              f"a JSON matrix: {exc}") from exc
    return doc


def _solver_config(args):
    return SolverConfig(marginal_tolerance=args.tol,
                        martingale_tolerance=args.tol,
                        max_outer_iterations=args.max_outer)


def _solve_payload(report):
    mu, nu = report.coupling.mu, report.coupling.nu
    return {
        "converged": report.converged,
        "iterations": report.iterations,
        "primal_value": report.primal_value,
        "dual_value": report.dual_value,
        "duality_gap": abs(report.primal_value - report.dual_value),
        "marginal_residual": report.marginal_residual,
        "martingale_residual": report.martingale_residual,
        "identity_residual": gaussian_reference_identity_check(report.coupling),
        "potentials": {"phi": report.potentials.phi,
                       "psi": report.potentials.psi,
                       "h": report.potentials.h},
        "mu": measure_to_json(mu),
        "nu": measure_to_json(nu),
    }


def cmd_solve(args):
    mu = _load_discrete(args.mu, "--mu")
    nu = _load_discrete(args.nu, "--nu")
    config = _solver_config(args)
    report = sinkhorn_msb(mu, nu, config)
    out = _outdir(args)

    _write_csv(out, "coupling.csv",
               [f"nu_{j}" for j in range(nu.n)], report.coupling.matrix)
    doc = {"schema": SCHEMA,
           "manifest": _manifest(args, "solve",
                                 {"mu": args.mu, "nu": args.nu},
                                 {"tol": args.tol, "max_outer": args.max_outer,
                                  "iterations": report.iterations}),
           **_solve_payload(report),
           "coupling_csv": "coupling.csv"}
    _write_json(out, "solve_report.json", doc)
    print(f"solve: converged={report.converged} "
          f"primal={report.primal_value!r} "
          f"gap={doc['duality_gap']:.3e} iterations={report.iterations}")
    return 0 if report.converged else 2


def cmd_certify(args):
    mu = _load_discrete(args.mu, "--mu")
    nu = _load_discrete(args.nu, "--nu")
    config = _solver_config(args)
    report = sinkhorn_msb(mu, nu, config)

    base = extract_base_measure(report)
    sp_value, _, (phibar, psi) = classical_sinkhorn_sp(base, nu)
    ss1, ss2 = schroedinger_system_residuals(base, nu, phibar, psi)
    mcov, _ = mcov_discrete(base, mu)
    vp = sp_value + mcov
    identity = gaussian_reference_identity_check(report.coupling)

    primal, dual = report.primal_value, report.dual_value
    checks = {
        "converged": report.converged,
        "duality_gap": abs(primal - dual) <= 1e-8 * (1.0 + abs(primal)),
        "variational_gap": abs(primal - vp) <= 1e-7,
        "schroedinger_system": max(ss1, ss2) < 1e-10,
        "reference_identity": identity < 1e-10,
    }
    doc = {"schema": SCHEMA,
           "manifest": _manifest(args, "certify",
                                 {"mu": args.mu, "nu": args.nu},
                                 {"tol": args.tol, "max_outer": args.max_outer,
                                  "iterations": report.iterations}),
           **_solve_payload(report),
           "base_measure": measure_to_json(base),
           "sp_value": sp_value,
           "mcov_value": mcov,
           "vp_value": vp,
           "variational_gap": abs(primal - vp),
           "schroedinger_residuals": [ss1, ss2],
           "checks": checks,
           "all_pass": all(checks.values())}
    out = _outdir(args)
    _write_json(out, "certify_report.json", doc)
    print(f"certify: all_pass={doc['all_pass']} "
          f"P={primal!r} D={dual!r} VP={vp!r}")
    return 0 if doc["all_pass"] else 2


def cmd_gaussian(args):
    s0 = _parse_matrix(args.sigma0, "--sigma0")
    s1 = _parse_matrix(args.sigma1, "--sigma1")
    mean0 = [float(v) for v in args.mean0.split(",")] if args.mean0 else None
    mean1 = [float(v) for v in args.mean1.split(",")] if args.mean1 else None
    sol = gaussian_msb_closed_form(s0, s1, mean0, mean1)

    quad_energy = weighted_energy_quadrature(sol.delta)
    closed_energy = gaussian_energy_closed_form(sol.delta)
    grid = np.linspace(0.0, 1.0, args.grid_points)
    comp = bass_comparison_gaussian(sol.sigma0, sol.sigma1, grid=grid)

    d = sol.dim
    header = (["t"]
              + [f"sigma_{i}{j}" for i in range(d) for j in range(d)]
              + [f"tau_{k}" for k in range(d)]
              + [f"bridge_{k}" for k in range(d)]
              + [f"flat_{k}" for k in range(d)])
    rows = []
    taus = comp.time_change(grid)
    for g, t in enumerate(grid):
        sig_t = follmer_volatility_gaussian(sol.delta, t)
        rows.append([t, *sig_t.ravel(), *taus[g], *comp.bridge_schedule[g],
                     *comp.flat_schedule[g]])
    out = _outdir(args)
    _write_csv(out, "schedules.csv", header, rows)

    doc = {"schema": SCHEMA,
           "manifest": _manifest(args, "gaussian",
                                 {"sigma0": args.sigma0, "sigma1": args.sigma1},
                                 {"grid_points": args.grid_points}),
           "dimension": d,
           "entropy_value": sol.entropy_value,
           "energy_quadrature": quad_energy,
           "energy_closed_form": closed_energy,
           "energy_abs_error": abs(quad_energy - closed_energy),
           "delta": sol.delta,
           "base_covariance": sol.base_covariance,
           "joint_covariance": sol.joint_covariance,
           "phibar_quadratic": sol.phibar_quadratic,
           "phibar_constant": sol.phibar_constant,
           "psi_quadratic": sol.psi_quadratic,
           "h_matrix": sol.h_matrix,
           "eigenvalues": comp.eigenvalues,
           "bass_volatility": comp.bass_volatility,
           "max_schedule_discrepancy": comp.max_discrepancy,
           "schedules_csv": "schedules.csv"}
    _write_json(out, "gaussian_report.json", doc)
    print(f"gaussian: entropy={sol.entropy_value!r} "
          f"energy={closed_energy!r} "
          f"schedule_discrepancy={comp.max_discrepancy:.3e}")
    return 0


def cmd_simulate(args):
    grid = np.linspace(0.0, 1.0, args.grid_points)
    if args.delta is not None:
        if args.mu is not None or args.nu is not None:
            raise StructuralError("--delta excludes --mu/--nu")
        delta = np.asarray(_parse_matrix(args.delta, "--delta"), dtype=float)
        fiber = FiberModel.gaussian(np.zeros(delta.shape[0]), delta)
        ensemble = simulate_follmer_martingale(
            fiber, grid=grid, n_paths=args.paths, seed=args.seed,
            method=args.method, store_every=args.store_every)
        inputs = {"delta": args.delta}
    else:
        if args.mu is None or args.nu is None:
            raise StructuralError("simulate needs --delta or both --mu/--nu")
        mu = _load_discrete(args.mu, "--mu")
        nu = _load_discrete(args.nu, "--nu")
        report = sinkhorn_msb(mu, nu, _solver_config(args))
        if not report.converged:
            raise NotConverged("solver did not converge; no ensemble simulated")
        cond = report.coupling.conditionals()
        fibers = [FiberModel.discrete(mu.atoms[i],
                                      DiscreteMeasure(nu.atoms, cond[i]))
                  for i in range(mu.n)]
        ensemble = randomize_over_mu(
            mu, fibers, grid=grid, n_paths=args.paths, seed=args.seed,
            nu=nu, method=args.method, store_every=args.store_every)
        inputs = {"mu": args.mu, "nu": args.nu}

    bij = phi_bijection_check(ensemble)
    out = _outdir(args)
    ensemble.to_csv(out / "ensemble.csv", max_paths=args.csv_paths)

    # the two costs agree in the limit only when both are finite; discrete
    # fibers have log-divergent energies near t = 1, so for them the passing
    # criterion is the pathwise drift identity alone
    gaussian_fibers = all(f.kind == "gaussian" for f in ensemble.fibers)
    passing = bij.pathwise_max_dev < 1e-8 and (
        bij.rel_discrepancy < 1e-2 if gaussian_fibers else True)
    term = ensemble.terminal
    doc = {"schema": SCHEMA,
           "manifest": _manifest(args, "simulate", inputs,
                                 {"paths": args.paths,
                                  "grid_points": args.grid_points,
                                  "store_every": args.store_every,
                                  "method": args.method}),
           "n_paths": ensemble.n_paths,
           "method": ensemble.method,
           "cost_drift": bij.cost_drift,
           "cost_mart": bij.cost_mart,
           "rel_discrepancy": bij.rel_discrepancy,
           "pathwise_max_dev": bij.pathwise_max_dev,
           "terminal_mean": term.mean(axis=0),
           "terminal_second_moment": float(np.mean(np.sum(term ** 2, axis=1))),
           "all_pass": passing,
           "ensemble_csv": "ensemble.csv"}
    _write_json(out, "simulate_report.json", doc)
    print(f"simulate: paths={ensemble.n_paths} "
          f"cost_drift={bij.cost_drift!r} cost_mart={bij.cost_mart!r} "
          f"rel_discrepancy={bij.rel_discrepancy:.3e}")
    return 0 if passing else 2


def cmd_filter(args):
    if args.nu is not None:
        nu = _load_discrete(args.nu, "--nu")
    else:
        nu = DiscreteMeasure([[-1.0], [0.0], [1.0]], [0.3, 0.4, 0.3])
    x, _, _ = barycenter_and_moments(nu)
    fiber = FiberModel.discrete(x, nu)
    sigmas = tuple(float(v) for v in args.sigmas.split(","))

    inv = sigma_invariance_test(fiber, s=args.s, sigmas=sigmas,
                                n_samples=args.paths, seed=args.seed)
    won = wonham_sde_crosscheck(n_paths=args.paths, n_steps=args.steps,
                                checkpoints=(1.0, 4.0), seed=args.seed)

    qs = np.linspace(0.0, 1.0, 201)
    header = ["q"] + [f"M_sigma_{sig}" for sig in inv.sigmas]
    rows = np.column_stack(
        [qs] + [np.quantile(inv.samples[sig], qs) for sig in inv.sigmas])
    out = _outdir(args)
    _write_csv(out, "filter_quantiles.csv", header, rows)

    passing = (inv.max_ks < 0.02
               and max(won.ks_by_checkpoint.values()) < 0.02
               and abs(won.terminal_freq_exact - 0.5) < 0.01
               and abs(won.terminal_freq_euler - 0.5) < 0.01)
    doc = {"schema": SCHEMA,
           "manifest": _manifest(args, "filter",
                                 {"nu": args.nu},
                                 {"s": args.s, "sigmas": list(inv.sigmas),
                                  "paths": args.paths, "steps": args.steps}),
           "sigma_invariance": {"s": inv.s, "sigmas": list(inv.sigmas),
                                "ks_matrix": inv.ks_matrix,
                                "max_ks": inv.max_ks},
           "wonham": {"checkpoints": list(won.checkpoints),
                      "ks": {repr(k): v
                             for k, v in won.ks_by_checkpoint.items()},
                      "terminal_freq_exact": won.terminal_freq_exact,
                      "terminal_freq_euler": won.terminal_freq_euler,
                      "clamp_violations": won.clamp_violations},
           "all_pass": passing,
           "quantiles_csv": "filter_quantiles.csv"}
    _write_json(out, "filter_report.json", doc)
    print(f"filter: max_ks={inv.max_ks:.4f} "
          f"wonham_ks={max(won.ks_by_checkpoint.values()):.4f} "
          f"all_pass={passing}")
    return 0 if passing else 2


def cmd_threepoint(args):
    instance = ThreePointInstance(args.p1, args.q1, args.p2, args.q2)
    entropy = entropy_minimize(instance)
    bass = bass_minimize(instance)
    gap = (entropy.u - bass.u, entropy.v - bass.v)

    out = _outdir(args)
    lines = ["entropy optimizer"]
    for row in entropy.matrix:
        lines.append("  " + "  ".join(f"{v:12.8f}" for v in row))
    lines.append("flat-volatility optimizer")
    for row in bass.matrix:
        lines.append("  " + "  ".join(f"{v:12.8f}" for v in row))
    lines.append(f"gap (u, v): {gap[0]:14.6e} {gap[1]:14.6e}")
    (out / "threepoint_matrices.txt").write_text("\n".join(lines) + "\n",
                                                 encoding="utf-8")

    doc = {"schema": SCHEMA,
           "manifest": _manifest(args, "threepoint", {},
                                 {"p1": args.p1, "q1": args.q1,
                                  "p2": args.p2, "q2": args.q2}),
           "chebyshev_center": list(instance.chebyshev_center()),
           "entropy": {"u": entropy.u, "v": entropy.v,
                       "matrix": entropy.matrix,
                       "value": entropy.value,
                       "system_residual": list(entropy.system_residual),
                       "boundary_entries": list(entropy.boundary_entries)},
           "bass": {"u": bass.u, "v": bass.v,
                    "matrix": bass.matrix,
                    "value": bass.value,
                    "system_residual": list(bass.system_residual),
                    "boundary_entries": list(bass.boundary_entries),
                    "cross_check_uv": list(bass.cross_check_uv)},
           "optimizer_gap": list(gap),
           "matrices_txt": "threepoint_matrices.txt"}
    _write_json(out, "threepoint_report.json", doc)
    print(f"threepoint: gap=({gap[0]:.6e}, {gap[1]:.6e})")
    return 0


def build_parser():
    parser = _Parser(prog="mbridge",
                     description="entropic martingale transport toolkit")
    parser.add_argument("--version", action="version",
                        version=f"mbridge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def common(p, seed=True):
        p.add_argument("--out", default=".", help="output directory")
        if seed:
            p.add_argument("--seed", type=int, default=42)

    def solver_flags(p):
        p.add_argument("--tol", type=float, default=1e-10)
        p.add_argument("--max-outer", type=int, default=10_000,
                       dest="max_outer")

    p = sub.add_parser("solve", help="solve one discrete instance")
    p.add_argument("--mu", required=True)
    p.add_argument("--nu", required=True)
    solver_flags(p)
    common(p, seed=False)
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("certify", help="value chain on one instance")
    p.add_argument("--mu", required=True)
    p.add_argument("--nu", required=True)
    solver_flags(p)
    common(p, seed=False)
    p.set_defaults(handler=cmd_certify)

    p = sub.add_parser("gaussian", help="Gaussian closed forms and schedules")
    p.add_argument("--sigma0", required=True)
    p.add_argument("--sigma1", required=True)
    p.add_argument("--mean0", default=None)
    p.add_argument("--mean1", default=None)
    p.add_argument("--grid-points", type=int, default=101, dest="grid_points")
    common(p, seed=False)
    p.set_defaults(handler=cmd_gaussian)

    p = sub.add_parser("simulate", help="path ensemble with energies")
    p.add_argument("--delta", default=None,
                   help="Gaussian fiber increment covariance")
    p.add_argument("--mu", default=None)
    p.add_argument("--nu", default=None)
    p.add_argument("--paths", type=int, default=10_000)
    p.add_argument("--grid-points", type=int, default=1001,
                   dest="grid_points")
    p.add_argument("--store-every", type=int, default=50, dest="store_every")
    p.add_argument("--method", choices=("bridge", "euler"), default="bridge")
    p.add_argument("--csv-paths", type=int, default=200, dest="csv_paths")
    solver_flags(p)
    common(p)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("filter", help="observation-time law checks")
    p.add_argument("--nu", default=None,
                   help="terminal law (default three symmetric atoms)")
    p.add_argument("--s", type=float, default=1.0)
    p.add_argument("--sigmas", default="0.5,1,2")
    p.add_argument("--paths", type=int, default=40_000)
    p.add_argument("--steps", type=int, default=4000)
    common(p)
    p.set_defaults(handler=cmd_filter)

    p = sub.add_parser("threepoint", help="3x3 family optimizers")
    p.add_argument("--p1", type=float, required=True)
    p.add_argument("--q1", type=float, required=True)
    p.add_argument("--p2", type=float, required=True)
    p.add_argument("--q2", type=float, required=True)
    common(p, seed=False)
    p.set_defaults(handler=cmd_threepoint)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    try:
        code = args.handler(args)
    except _INFEASIBLE as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3
    except NotConverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return 2
    except MbridgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        print(f"[{getattr(args, 'command', '?')}] wall-clock "
              f"{time.perf_counter() - start:.3f}s", file=sys.stderr)
    return code
