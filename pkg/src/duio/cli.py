"""Command-line front end.

Exit status: 0 success, 1 a condition failed (existence, verification,
convergence, reference check), 2 bad input (unreadable or invalid scenario,
inconsistent flags).
"""

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import designer as D
from . import reproduce as R
from . import scenario as S
from . import simulator as sim
from .errors import DuioError, GraphError, ScenarioError

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

# error codes that point at the input rather than at the system under study
INPUT_CODES = {
    "mode_mismatch", "bad_shape", "bad_mode", "bad_step", "bad_horizon", "bad_noise", "bad_schedule",
    "missing_design", "disconnected_topology", "requires_strong_connectivity", "bad_partition",
    "rank_deficient_unknown_input",
}


@dataclass
class RunReport:
    command: str
    ok: bool
    sections: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    exit_code: int = EXIT_OK
    table: str = ""

    def as_dict(self):
        return {"command": self.command, "ok": self.ok, "exit_code": self.exit_code,
                "sections": _plain(self.sections), "files": list(self.files)}

    def render(self):
        """Human-readable view built from :meth:`as_dict`."""
        d = self.as_dict()
        lines = [f"{d['command']}: {'OK' if d['ok'] else 'FAILED'}"]
        for name, body in d["sections"].items():
            lines.append(f"  {name}:")
            lines.extend(_render(body, 4))
        for f in d["files"]:
            lines.append(f"  wrote {f}")
        return "\n".join(lines)


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, float) and not np.isfinite(v):
        return None
    return v


def _render(body, indent):
    pad = " " * indent
    if isinstance(body, dict):
        out = []
        for k, v in body.items():
            if isinstance(v, (dict, list)) and v and any(isinstance(x, (dict, list)) for x in (v.values() if isinstance(v, dict) else v)):
                out.append(f"{pad}{k}:")
                out.extend(_render(v, indent + 2))
            else:
                out.append(f"{pad}{k}: {_scalar(v)}")
        return out
    if isinstance(body, list):
        out = []
        for k, v in enumerate(body):
            if isinstance(v, (dict, list)):
                out.append(f"{pad}[{k}]")
                out.extend(_render(v, indent + 2))
            else:
                out.append(f"{pad}{_scalar(v)}")
        return out
    return [f"{pad}{_scalar(body)}"]


def _scalar(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "[" + ", ".join(_scalar(x) for x in v) + "]"
    if isinstance(v, dict):
        return ", ".join(f"{k}={_scalar(x)}" for k, x in v.items())
    return str(v)


# ------------------------------------------------------------------ commands


def cmd_check(path):
    sc = S.load(path)
    t0 = time.perf_counter()
    ranks, joint, witness = D.check_existence(sc.model)
    elapsed = time.perf_counter() - t0
    sections = {
        "existence": {
            "rank_condition": {f"node {i}": bool(r) for i, r in enumerate(ranks)},
            "joint_detectability": bool(joint),
            "witness_dim": None if witness is None else witness.dim,
            "seconds": elapsed,
        }
    }
    if witness is not None and witness.dim:
        sections["existence"]["witness_basis"] = witness.basis
    ok = all(ranks) and joint
    return RunReport("check", ok, sections, exit_code=EXIT_OK if ok else EXIT_FAIL)


def cmd_design(path, mode=None, out=None, safety_factor=None):
    sc = S.load(path)
    opts = sc.design_options()
    if safety_factor is not None:
        opts.safety_factor = safety_factor
    design, cert = D.design_gains(sc.model, sc.topology, mode, opts)
    report = D.verify_existing_design(sc.model, design, 1e-8)
    summary = {
        "mode": design.mode,
        "chi_bound": cert.chi_bound,
        "chi": design.chi,
        "mu": cert.mu,
        "time_constant": cert.time_constant,
        "beta": cert.beta,
        "margin": cert.extras.get("margin"),
        "max_eig_sum_lambda": cert.max_eig,
    }
    files = []
    if out:
        sc.design = design
        sc.certificate = _plain(summary)
        S.save(sc, out)
        files.append(out)
    return RunReport("design", report.passed, {"certificate": summary, "verification": report.as_dict()}, files,
                     EXIT_OK if report.passed else EXIT_FAIL)


def cmd_verify(path, tol=None):
    sc = S.load(path)
    if sc.design is None:
        raise DuioError("missing_design", "scenario has no design block")
    tol = tol if tol is not None else sc.options.get("verify_tol", 1e-8)
    report = D.verify_existing_design(sc.model, sc.design, tol)
    sections = {"verification": report.as_dict()}
    if report.lmi_ok and sc.model.N > 1:
        cert = D.certify(sc.design, sc.model, sc.topology)
        sections["certificate"] = {"chi_bound": cert.chi_bound, "chi": sc.design.chi, "mu": cert.mu}
    return RunReport("verify", report.passed, sections, exit_code=EXIT_OK if report.passed else EXIT_FAIL)


def cmd_simulate(path, out_dir=None, step=None, horizon=None, seed=None, tol=None):
    sc = S.load(path)
    if sc.design is None:
        raise DuioError("missing_design", "scenario has no design block; run 'design' first")
    design = R.simulation_design(sc)
    if not np.isfinite(design.chi):
        cert = D.certify(design, sc.model, sc.topology, safety_factor=sc.options.get("safety_factor", 1.01))
        design = design.with_chi(cert.chi_bound * sc.options.get("safety_factor", 1.01))
    cfg = R.config_for(sc, design, step=step, horizon=horizon, seed=seed, verify_tol=tol)
    trace = sim.simulate(cfg, on_blowup="truncate")
    metrics = sim.error_metrics(trace)
    cert = D.certify(design, sc.model, sc.topology)
    mu = cert.mu if np.isfinite(cert.mu) else None
    ok = not metrics.blew_up and metrics.terminal_relative <= 1e-3
    sections = {"metrics": metrics.as_dict(), "run": {"backend": trace.backend, "steps": len(trace.times) - 1,
                                                     "mu": mu, "chi": design.chi}}
    files = []
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        stem = os.path.splitext(os.path.basename(str(path)))[0]
        files = R._write_outputs(trace, mu, out_dir, stem)
    return RunReport("simulate", ok, sections, files, EXIT_OK if ok else EXIT_FAIL)


def cmd_reproduce(which, out_dir=None, step=None, horizon=None, seed=None, jobs=1):
    rows = R.run_all(which, out_dir, jobs=jobs, step=step, horizon=horizon, seed=seed)
    ok = all(r.passed for r in rows)
    files = []
    if out_dir:
        files = sorted(os.path.join(out_dir, f) for f in os.listdir(out_dir))
    table = "\n".join(r.line() for r in rows)
    table += f"\n{sum(r.passed for r in rows)}/{len(rows)} passed"
    return RunReport("reproduce", ok, {"criteria": [r.as_dict() for r in rows]}, files,
                     EXIT_OK if ok else EXIT_FAIL, table)


# ---------------------------------------------------------------------- main


def build_parser():
    p = argparse.ArgumentParser(prog="duio", description="Distributed unknown-input observer toolkit.")
    p.add_argument("--json", action="store_true", help="print the report as JSON instead of text")
    p.add_argument("--report", metavar="PATH", help="also write the JSON report to PATH")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="existence conditions")
    c.add_argument("scenario")

    d = sub.add_parser("design", help="synthesize and certify gains")
    d.add_argument("scenario")
    d.add_argument("--mode", choices=["undirected", "switching", "directed"])
    d.add_argument("--out", help="scenario file to write with the design block filled in")
    d.add_argument("--safety-factor", type=float)

    v = sub.add_parser("verify", help="residual table for supplied gains")
    v.add_argument("scenario")
    v.add_argument("--tol", type=float)

    s = sub.add_parser("simulate", help="simulate and write trace and plots")
    s.add_argument("scenario")
    s.add_argument("--out", help="output directory")
    s.add_argument("--step", type=float)
    s.add_argument("--horizon", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--tol", type=float, help="design verification tolerance")

    r = sub.add_parser("reproduce", help="reference checks on the bundled scenarios")
    r.add_argument("which", choices=["1", "2", "3", "all"])
    r.add_argument("--out", help="output directory for traces and plots")
    r.add_argument("--step", type=float)
    r.add_argument("--horizon", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--jobs", type=int, default=1)
    return p


def run(args):
    if args.command == "check":
        return cmd_check(args.scenario)
    if args.command == "design":
        return cmd_design(args.scenario, args.mode, args.out, args.safety_factor)
    if args.command == "verify":
        return cmd_verify(args.scenario, args.tol)
    if args.command == "simulate":
        return cmd_simulate(args.scenario, args.out, args.step, args.horizon, args.seed, args.tol)
    return cmd_reproduce(args.which, args.out, args.step, args.horizon, args.seed, args.jobs)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        report = run(args)
    except (ScenarioError, GraphError) as exc:
        return _error(args, exc, EXIT_INPUT)
    except DuioError as exc:
        return _error(args, exc, EXIT_INPUT if exc.code in INPUT_CODES else EXIT_FAIL)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.as_dict(), fh, indent=1)
    if args.json:
        print(json.dumps(report.as_dict(), indent=1))
    else:
        print(report.table or report.render())
    return report.exit_code


def _error(args, exc, status):
    payload = {"command": args.command, "ok": False, "exit_code": status,
               "error": {"code": exc.code, "message": str(exc), "location": getattr(exc, "location", None)}}
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
    if args.json:
        print(json.dumps(payload, indent=1))
    print(f"error: {exc}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
