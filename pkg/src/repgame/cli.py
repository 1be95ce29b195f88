"""Command-line entry point: ``repgame <command> ...``.

Every command writes its artifacts into ``--out-dir`` together with a
``<command>.manifest.json`` holding the wall-clock details. Artifacts carry
only a deterministic ``run_id`` (a hash of command, arguments and version)
and the manifest file name, so identical invocations give byte-identical
artifacts.

Exit codes: 0 success, 1 analysis failure, 2 usage or parse error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import kernels
from .bounds import (
    classify_scenario,
    conditioned_law_check,
    prior_chi,
    construct_deviation,
    survival_probabilities,
    verify_deviation,
)
from .dynamics import default_theta_star, simulate
from .equilibria import (
    ConstructionError,
    EquilibriumMachine,
    build_low_payoff_equilibrium,
    check_incentives,
    motivating_example_profile,
)
from .game import AssumptionError, ScenarioError, validate_scenario
from .geometry import (
    RegionSpec,
    competitor_coefficients,
    psi_vector,
    region_summary,
)
from .lambda_iteration import grid_points, lambda_k_iteration, regions_csv
from .scenario_io import ParseError, dump_json, load_scenario, read_json, scenario_hash
from .strategies import OffPathError, profile_from_dict
from .trees import TreeBudgetError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        return metadata.version("repgame")
    except metadata.PackageNotFoundError:
        return "0.0.0"


class Run:
    """Output bookkeeping for one command invocation."""

    def __init__(self, args, command: str):
        self.command = command
        self.out_dir = Path(args.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        params = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out_dir")}
        self.params = params
        blob = json.dumps({"command": command, "params": params, "version": _version()}, sort_keys=True,
                          default=str)
        self.run_id = hashlib.sha256(blob.encode()).hexdigest()[:16]
        self.manifest_name = f"{command}.manifest.json"
        self.outputs = []
        self.start = time.time()

    def path(self, name: str | None, default: str) -> Path:
        p = Path(name or default)
        return p if p.is_absolute() or p.parent != Path(".") else self.out_dir / p

    def header(self, scenario=None) -> dict:
        h = {"run_id": self.run_id, "manifest": self.manifest_name, "command": self.command,
             "version": _version()}
        if scenario is not None:
            h["scenario_hash"] = scenario_hash(scenario)
        return h

    def write_json(self, obj, name, default) -> Path:
        p = self.path(name, default)
        dump_json(obj, p)
        self.outputs.append(str(p))
        return p

    def write_text(self, text, name, default) -> Path:
        p = self.path(name, default)
        p.write_text(text)
        self.outputs.append(str(p))
        return p

    def finish(self, scenario_path=None, seed=None):
        dump_json({
            "run_id": self.run_id,
            "command": self.command,
            "scenario": scenario_path,
            "parameters": self.params,
            "seed": seed,
            "version": _version(),
            "kernel_backend": kernels.BACKEND,
            "outputs": self.outputs,
            "wall_clock_seconds": round(time.time() - self.start, 3),
            "started_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(self.start)),
        }, self.out_dir / self.manifest_name)


def _print(obj):
    sys.stdout.write(dump_json(obj))


def _set_threads(n):
    if n and n > 0 and kernels.BACKEND == "numba":
        import numba

        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))


# -- commands -----------------------------------------------------------------


def cmd_validate(args) -> int:
    run = Run(args, "validate")
    s = load_scenario(args.scenario)
    rep = validate_scenario(s)
    out = {**run.header(s), "scenario": args.scenario, **rep.to_dict()}
    run.write_json(out, args.out, "validation.json")
    run.finish(args.scenario)
    _print(out)
    return EXIT_OK if rep.ok else EXIT_FAIL


def _grid_memberships(s, theta_star, alpha, coords_idx, pts_sub, spec):
    """Membership of every grid point (other coordinates 0) in the three static regions."""
    m = s.game.m
    pts = np.zeros((pts_sub.shape[0], m))
    pts[:, coords_idx] = pts_sub
    _, c0, C = competitor_coefficients(s, theta_star, alpha)
    bar = np.all(c0[None, :] + pts @ C.T > 1e-9, axis=1)
    box = np.all(c0[None, :] + pts @ np.minimum(C, 0.0).T > 1e-9, axis=1)
    under = pts @ spec.weights < spec.chi
    return {"lambda_bar": bar, "lambda": box, "lambda_underline": under}


def cmd_regions(args) -> int:
    run = Run(args, "regions")
    s = load_scenario(args.scenario)
    alpha = s.commitment_action(args.alpha)
    theta_star = args.theta_star or default_theta_star(s, alpha)
    lam = None
    if args.lam:
        lam = [float(x) for x in args.lam.split(",")]
    summary = region_summary(s, theta_star, alpha, lam)
    psi, _ = psi_vector(theta_star, alpha, s)
    keep = np.flatnonzero(np.isfinite(psi))
    coords = [s.game.states[i] for i in keep]
    out = {**run.header(s), "scenario": args.scenario, "summary": summary, "grid_coords": coords}
    if keep.size and keep.size <= 3:
        spec = RegionSpec.from_scenario(s, theta_star, alpha)
        dims = tuple(int(round(args.grid_max / args.grid_step)) + 1 for _ in keep)
        pts = grid_points(dims, args.grid_step)
        cols = _grid_memberships(s, theta_star, alpha, keep, pts, spec)
        if args.iterate:
            regions, report = lambda_k_iteration(s, theta_star, alpha, args.xi, args.epsilon, args.grid_step,
                                                 args.grid_max, args.max_k, args.profiles, args.seed)
            cols["lambda_0"] = regions[0].mask
            cols["lambda_k"] = regions[-1].mask
            out["iteration"] = report.to_dict()
        csv_path = run.write_text(regions_csv(coords, args.grid_step, [args.grid_max] * len(keep), cols),
                                  args.csv, "regions.csv")
        out["grid"] = {"step": args.grid_step, "max": args.grid_max, "points": int(pts.shape[0]),
                       "csv": str(csv_path), "counts": {k: int(np.sum(v)) for k, v in cols.items()}}
    else:
        out["grid"] = None
    run.write_json(out, args.out, "regions.json")
    run.finish(args.scenario, args.seed)
    _print(out)
    return EXIT_OK


def _load_profile(s, path):
    return profile_from_dict(s, read_json(path))


def cmd_simulate(args) -> int:
    run = Run(args, "simulate")
    s = load_scenario(args.scenario)
    prof = _load_profile(s, args.profile)
    _set_threads(args.threads)
    res = simulate(s, prof, delta=args.delta, horizon=args.horizon, reps=args.reps, seed=args.seed,
                   true_type=args.true_type, alpha=args.alpha, theta_star=args.theta_star,
                   far_eps=args.far_epsilon, record=not args.no_traces, threads=args.threads)
    summary = {**run.header(s), "scenario": args.scenario, "profile": args.profile, "true_type": args.true_type,
               **res.summary()}
    claims = []
    if args.expect_payoff is not None:
        mean = summary["discounted_payoff"]["mean"]
        tol = args.tol + res.remainder
        claims.append({"claim": f"discounted payoff = {args.expect_payoff}", "value": mean, "tolerance": tol,
                       "passed": abs(mean - args.expect_payoff) <= tol})
    summary["claims"] = claims
    if not args.no_traces:
        path = run.write_text(res.to_csv(max_reps=args.max_trace_reps), args.out, "traces.csv")
        summary["traces"] = str(path)
    run.write_json(summary, args.summary, "simulation.json")
    run.finish(args.scenario, args.seed)
    _print(summary)
    return EXIT_OK if all(c["passed"] for c in claims) else EXIT_FAIL


def cmd_deviation(args) -> int:
    run = Run(args, "deviation")
    s = load_scenario(args.scenario)
    prof = _load_profile(s, args.profile)
    alpha = s.commitment_action(args.alpha)
    theta_star = args.theta_star or default_theta_star(s, alpha)
    spec = RegionSpec.from_scenario(s, theta_star, alpha)
    chi = args.chi if args.chi is not None else prior_chi(prof, alpha, spec)
    spec = spec.with_chi(chi)
    table = survival_probabilities(s, prof, alpha, spec, args.epsilon, args.horizon)
    plan = construct_deviation(table)
    out = {**run.header(s), "scenario": args.scenario, "profile": args.profile, "theta_star": theta_star,
           "chi": chi, "epsilon": args.epsilon, "plan": plan.to_dict(prof, args.max_nodes)}
    ok = True
    if args.verify_reps:
        ver = verify_deviation(s, prof, plan, spec=spec, eps=args.epsilon, reps=args.verify_reps, seed=args.seed)
        out["verification"] = ver
        ok = ver["passed"]
    if args.horizon <= 8:
        out["conditioned_law"] = conditioned_law_check(s, prof, plan, spec)
        ok = ok and bool(out["conditioned_law"]["passed"])
    run.write_json(out, args.out, "plan.json")
    run.finish(args.scenario, args.seed)
    _print({k: v for k, v in out.items() if k != "plan"} | {"root_survival": table.root,
                                                           "nodes": int(table.graph.n_nodes)})
    return EXIT_OK if ok else EXIT_FAIL


def cmd_equilibrium_build(args) -> int:
    run = Run(args, "equilibrium-build")
    if args.construction == "example":
        eq = motivating_example_profile(args.example_eps, args.delta or 0.9)
        scen_path = None
    else:
        if not args.scenario or not args.a1_star:
            raise UsageError("--scenario and --a1-star are required for the low-payoff construction")
        s = load_scenario(args.scenario)
        eq = build_low_payoff_equilibrium(s, args.theta_star or s.game.states[0], args.a1_star, eta=args.eta,
                                          delta=args.delta)
        scen_path = args.scenario
    out = {**run.header(eq.scenario), **eq.to_dict()}
    run.write_json(out, args.out, "equilibrium.json")
    run.finish(scen_path)
    _print({k: out[k] for k in ("run_id", "construction", "theta_star", "params", "scenario_hash")})
    return EXIT_OK


def cmd_equilibrium_check(args) -> int:
    run = Run(args, "equilibrium-check")
    eq = EquilibriumMachine.from_dict(read_json(args.eq))
    rep = check_incentives(eq, args.delta, horizon=args.horizon, tol=args.tol)
    out = {**run.header(eq.scenario), "equilibrium": args.eq, "incentives": rep}
    run.write_json(out, args.out, "incentives.json")
    run.finish(None)
    _print(out)
    if rep["status"] == "refused":
        return EXIT_FAIL
    return EXIT_OK if rep["passed"] else EXIT_FAIL


def cmd_classify(args) -> int:
    run = Run(args, "classify")
    s = load_scenario(args.scenario)
    alpha = s.commitment_action(args.alpha)
    theta_star = args.theta_star or default_theta_star(s, alpha)
    out = {**run.header(s), "scenario": args.scenario, "classification": classify_scenario(s, theta_star, alpha)}
    run.write_json(out, args.out, "classification.json")
    run.finish(args.scenario)
    _print(out)
    return EXIT_OK


def _claims(obj, source, path=""):
    """Every dict carrying a boolean ``passed`` becomes one claim."""
    found = []
    if isinstance(obj, dict):
        if isinstance(obj.get("passed"), bool):
            found.append({"source": source, "claim": obj.get("claim", path or "passed"), "passed": obj["passed"],
                          **{k: obj[k] for k in ("value", "tolerance") if k in obj}})
        for k, v in obj.items():
            if k != "passed":
                found.extend(_claims(v, source, f"{path}.{k}" if path else k))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            found.extend(_claims(v, source, f"{path}[{i}]"))
    return found


def cmd_report(args) -> int:
    if not args.inputs:
        raise UsageError("report needs at least one input file")
    run = Run(args, "report")
    docs = [(p, read_json(p)) for p in args.inputs]
    hashes = {d.get("scenario_hash") for _, d in docs if d.get("scenario_hash")}
    if len(hashes) > 1:
        raise UsageError(f"inputs come from different scenarios: {sorted(hashes)}")
    claims = []
    sections = {}
    for p, d in docs:
        claims.extend(_claims({k: v for k, v in d.items() if k not in ("plan",)}, p))
        sections[p] = {k: d[k] for k in ("command", "run_id") if k in d}
        for key in ("classification", "discounted_payoff", "incentives", "verification", "summary"):
            if key in d:
                sections[p][key] = d[key]
    out = {"run_id": run.run_id, "manifest": run.manifest_name, "scenario_hash": next(iter(hashes), None),
           "inputs": list(args.inputs), "claims": claims, "all_passed": all(c["passed"] for c in claims),
           "sections": sections}
    run.write_json(out, args.out, "report.json")
    run.finish(None)
    _print(out)
    return EXIT_OK if out["all_passed"] else EXIT_FAIL


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    def global_flags(parser, default):
        # subcommands repeat the flags with suppressed defaults so values given before the command survive
        parser.add_argument("--seed", type=int, default=default(0), help="base seed (default 0)")
        parser.add_argument("--threads", type=int, default=default(1), help="worker threads for simulations")
        parser.add_argument("--out-dir", default=default("."), help="directory for artifacts and the manifest")

    common = argparse.ArgumentParser(add_help=False)
    global_flags(common, lambda v: argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="repgame", description="Reputation games with commitment types.")
    global_flags(p, lambda v: v)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", parents=[common], help="check a scenario file")
    v.add_argument("scenario")
    v.add_argument("--out")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("regions", parents=[common], help="likelihood regions, psi*, grid export")
    r.add_argument("--scenario", required=True)
    r.add_argument("--alpha", required=True, help="commitment action (name or pure label)")
    r.add_argument("--theta-star")
    r.add_argument("--lambda", dest="lam", help="comma-separated likelihood vector (default: prior)")
    r.add_argument("--grid-step", type=float, default=0.05)
    r.add_argument("--grid-max", type=float, default=4.0)
    r.add_argument("--iterate", action="store_true", help="run the grid region iteration")
    r.add_argument("--xi", type=float, default=0.25)
    r.add_argument("--epsilon", type=float, default=0.2)
    r.add_argument("--max-k", type=int, default=50)
    r.add_argument("--profiles", type=int, default=512)
    r.add_argument("--out")
    r.add_argument("--csv")
    r.set_defaults(func=cmd_regions)

    sm = sub.add_parser("simulate", parents=[common], help="Monte Carlo traces")
    sm.add_argument("--scenario", required=True)
    sm.add_argument("--profile", required=True)
    sm.add_argument("--delta", type=float)
    sm.add_argument("--horizon", type=int, default=1000)
    sm.add_argument("--reps", type=int, default=100)
    sm.add_argument("--true-type", default="prior")
    sm.add_argument("--alpha")
    sm.add_argument("--theta-star")
    sm.add_argument("--far-epsilon", type=float, default=0.1)
    sm.add_argument("--no-traces", action="store_true")
    sm.add_argument("--max-trace-reps", type=int)
    sm.add_argument("--expect-payoff", type=float)
    sm.add_argument("--tol", type=float, default=1e-9)
    sm.add_argument("--out", help="trace CSV")
    sm.add_argument("--summary", help="summary JSON")
    sm.set_defaults(func=cmd_simulate)

    d = sub.add_parser("deviation", parents=[common], help="band-conditioned deviation strategy")
    d.add_argument("--scenario", required=True)
    d.add_argument("--profile", required=True)
    d.add_argument("--alpha", required=True)
    d.add_argument("--theta-star")
    d.add_argument("--epsilon", type=float, default=0.1)
    d.add_argument("--chi", type=float, help="band base (default: chi at the prior)")
    d.add_argument("--horizon", type=int, default=400)
    d.add_argument("--verify-reps", type=int, default=0)
    d.add_argument("--max-nodes", type=int)
    d.add_argument("--out")
    d.set_defaults(func=cmd_deviation)

    e = sub.add_parser("equilibrium", help="build or check equilibrium constructions")
    esub = e.add_subparsers(dest="action", required=True)
    eb = esub.add_parser("build", parents=[common])
    eb.add_argument("--construction", choices=("low-payoff", "example"), default="low-payoff")
    eb.add_argument("--scenario")
    eb.add_argument("--theta-star")
    eb.add_argument("--a1-star")
    eb.add_argument("--eta", type=float)
    eb.add_argument("--delta", type=float)
    eb.add_argument("--example-eps", type=float, default=0.1)
    eb.add_argument("--out")
    eb.set_defaults(func=cmd_equilibrium_build)
    ec = esub.add_parser("check", parents=[common])
    ec.add_argument("--eq", required=True)
    ec.add_argument("--delta", type=float, default=0.95)
    ec.add_argument("--tol", type=float, default=1e-6)
    ec.add_argument("--horizon", type=int, default=200)
    ec.add_argument("--out")
    ec.set_defaults(func=cmd_equilibrium_check)

    c = sub.add_parser("classify", parents=[common], help="which side of the characterisation applies")
    c.add_argument("--scenario", required=True)
    c.add_argument("--alpha", required=True)
    c.add_argument("--theta-star")
    c.add_argument("--out")
    c.set_defaults(func=cmd_classify)

    rp = sub.add_parser("report", parents=[common], help="merge artifacts into one pass/fail report")
    rp.add_argument("inputs", nargs="*")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, UsageError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except ScenarioError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (AssumptionError, ConstructionError, OffPathError, TreeBudgetError, ValueError) as exc:
        sys.stderr.write(f"analysis failed: {exc}\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
