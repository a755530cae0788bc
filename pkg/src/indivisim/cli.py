"""Command-line driver: analyze, plan, simulate, verify.

Exit codes: 0 success, 2 infeasible plan, 3 invalid config or arguments,
4 cap abort, 5 verification failed.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .algsim import (
    Caps,
    CapExceeded,
    conventions,
    make_plan,
    simulate,
    verify_against_reference,
)
from .config import ConfigError, load
from .divisibility import estimate_tid, profile
from .instrument import DEFAULT_Z
from .liouvillian import ModelError, beta, beta_tilde
from .propagator import global_propagator, slice_grid
from .report import emit_report
from .trotter import BoundInputs, empirical_slt_error, trotter_bound

EXIT_OK, EXIT_INFEASIBLE, EXIT_INVALID, EXIT_CAP, EXIT_VERIFY = 0, 2, 3, 4, 5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_INVALID)


def _m_list(text: str) -> tuple:
    try:
        vals = tuple(int(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected comma-separated integers") from exc
    if any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("step counts must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="indivisim", description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True, help="model description (JSON)")
    p.add_argument("--command", required=True, choices=["analyze", "plan", "simulate", "verify"])
    p.add_argument("--m", type=int, default=None, help="override the step count")
    p.add_argument("--epsilon", type=float, default=0.1, help="total error budget")
    p.add_argument("--z", type=float, default=DEFAULT_Z, help="Wilson z-score")
    p.add_argument("--mode", choices=["exact", "sampled"], default="exact")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (sampled mode)")
    p.add_argument("--max-circuits", type=int, default=Caps.max_circuits)
    p.add_argument("--out", default=None, help="report path; stdout summary only if omitted")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--m-sequence", type=_m_list, default=(16, 32, 64, 128),
                   help="step counts for profiles and the t_id estimate")
    p.add_argument("--split", type=float, default=0.5, help="Trotter share of epsilon")
    p.add_argument("--aggregation", choices=["half", "triangle"], default="half",
                   help="circuit-count factor in the per-estimator tolerance")
    p.add_argument("--empirical", action=argparse.BooleanOptionalAction, default=None,
                   help="include measured product-formula errors in analyze (default: dim <= 8)")
    return p


def _analyze(L, t, args) -> dict:
    b = beta(L, t)
    bt = None
    if all(term.form == "gksl" for term in L.terms):
        bt = beta_tilde(L, t)
    tid = estimate_tid(L, t, args.m_sequence)
    want_emp = args.empirical if args.empirical is not None else L.dim <= 8
    exact = global_propagator(L, 0.0, t) if want_emp else None
    ms = sorted(set(args.m_sequence) | ({args.m} if args.m else set()))
    rows, profiles = [], []
    for m in ms:
        grid = slice_grid(L, t, m)
        prof = profile(grid)
        profiles.append(prof.to_dict())
        measured = trotter_bound(
            BoundInputs(L.K, b.value, t, m, prof.n_tilde, prof.n_hat), "measured")
        tid_b = trotter_bound(
            BoundInputs(L.K, b.value, t, m, 0, 0, min(tid.tid, t), tid.c_tilde), "tid")
        lo = hi = None
        if want_emp:
            est = empirical_slt_error(L, t, grid=grid, exact=exact)
            lo, hi = est.lower, est.upper
        rows.append({"m": m, "empirical_lower": lo, "empirical_upper": hi,
                     "bound_measured": measured, "bound_tid": tid_b})
    return {"beta": b.to_dict(), "beta_tilde": bt, "t_id": tid.to_dict(),
            "profiles": profiles, "sweep": rows}


def _state_dict(rho) -> list:
    return [[[float(x.real), float(x.imag)] for x in row] for row in np.asarray(rho)]


def run_command(args) -> tuple[dict, int]:
    cfg, L, rho0, obs = load(args.config)
    t = cfg.horizon
    head = {
        "command": args.command,
        "package_version": __version__,
        "schema_version": cfg.schema_version,
        "conventions": conventions(),
        "model": {"sites": L.lattice.n_sites, "local_dim": L.lattice.d, "K": L.K, "k": L.k,
                  "horizon": t},
    }
    if args.command == "analyze":
        return {**head, **_analyze(L, t, args)}, EXIT_OK

    caps = Caps(max_circuits=args.max_circuits)
    plan = make_plan(L, t, args.epsilon, z=args.z, caps=caps, m=args.m, split=args.split,
                     aggregation=args.aggregation, m_sequence=args.m_sequence, seed=args.seed)
    report = {**head, "plan": plan.to_dict()}
    if args.command == "plan":
        return report, EXIT_OK if plan.feasible else EXIT_INFEASIBLE
    if not plan.feasible:
        report["error"] = f"plan infeasible: {', '.join(plan.limiting)}"
        return report, EXIT_INFEASIBLE

    report["mode"] = args.mode
    report["seed"] = args.seed if args.mode == "sampled" else None
    sim = simulate(plan, rho0, obs, args.mode, args.seed)
    rec = sim.reconstruction
    report["state"] = _state_dict(rec.state)
    report["expectation"] = rec.expectation
    report["total_trials"] = sim.total_trials
    report["algorithmic_error"] = rec.error_report
    report["circuits"] = [res.to_dict() for res in sim.results]
    if args.command == "simulate":
        return report, EXIT_OK
    ver = verify_against_reference(L, rho0, obs, t, plan, args.mode, args.seed, sim=sim)
    ver.pop("algorithmic_error", None)
    report["verify"] = ver
    return report, EXIT_OK if ver["pass"] else EXIT_VERIFY


def _summary(report: dict) -> str:
    lines = [f"command: {report['command']}"]
    if "sweep" in report:
        lines.append(f"beta = {report['beta']['value']:.6g}, t_id = {report['t_id']['t_id']:.6g}")
        for row in report["sweep"]:
            emp = row["empirical_lower"]
            emp_s = "n/a" if emp is None else f"{emp:.3e}"
            lines.append(f"  m={row['m']:<5d} error={emp_s}  bound(measured)={row['bound_measured']:.3e}"
                         f"  bound(tid)={row['bound_tid']:.3e}")
    if "plan" in report:
        p = report["plan"]
        lines.append(f"m = {p['m']} ({p['m_source']}), non-CP slots = {p['N_total']}, "
                     f"circuits = 2^{p['log2_circuits']}, trials/estimator = {p['trials_per_estimator']}, "
                     f"feasible = {p['feasible']}")
    if "expectation" in report and report["expectation"] is not None:
        lines.append(f"<A> = {report['expectation']:.10g}")
    if "verify" in report:
        v = report["verify"]
        lines.append(f"trace distance = {v['trace_distance']:.3e} (threshold {v['threshold']:.3e}) "
                     f"pass = {v['pass']}")
    if "error" in report:
        lines.append(report["error"])
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report, code = run_command(args)
    except ConfigError as exc:
        for path, reason in exc.errors:
            print(f"config error at {path}: {reason}", file=sys.stderr)
        return EXIT_INVALID
    except (ModelError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CapExceeded as exc:
        print(f"cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    if code == EXIT_INFEASIBLE:
        print("plan infeasible: " + ", ".join(report["plan"]["limiting"]), file=sys.stderr)
    text = emit_report(report, args.format, args.out)
    print(_summary(report))
    if args.out is None and args.format == "csv":
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
