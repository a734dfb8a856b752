"""Command-line entry point: ``python -m greedywalk <command> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 a verification
failed. Every output except the manifest's ``wall_clock`` field is a pure
function of the flags, the config file and the seed.
"""

from __future__ import annotations

import argparse
import json
import math
import pathlib
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .blocks import restart_scan
from .dynamics import SimConfig, Trajectory, run_walk
from .experiments import first_step_law, run_ensemble, scaling_coupling
from .field_oracle import (CouplingError, PointField, coupling_check, direct_simulate,
                           equivalence_check, extract_drives)
from .potential import BaselineSpec, make_initial

OK, USAGE, FAILED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE, f"{self.prog}: error: {message}\n")


def _speed(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("speed must be positive")
    return v


def _common(p: argparse.ArgumentParser):
    # defaults are None so that only explicit flags override the config file
    p.add_argument("--config", help="JSON file with SimConfig fields")
    p.add_argument("--case", choices=("unit", "general"))
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--v", type=_speed, help="server speed; 'inf' accepted")
    p.add_argument("--service", choices=("det1", "exp"))
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mu", help="initial intensity, e.g. '3@0..10,1'")
    p.add_argument("--out", default="out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="greedywalk", description="Greedy server on the line.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run one walk, write CSV + manifest")
    _common(s)
    s.add_argument("--engine", choices=("potential", "field"), default="potential")

    s = sub.add_parser("verify", help="field simulation vs engine replay")
    _common(s)
    s.add_argument("--runs", type=int, default=None, help="number of seeds")
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--inject-fault", choices=("side",), help=argparse.SUPPRESS)

    s = sub.add_parser("blocks", help="block detection with restarts")
    _common(s)
    s.add_argument("--epsilon", type=float, default=None)
    s.add_argument("--trajectory", help="trajectory CSV written by simulate")
    s.add_argument("--max-blocks", type=int, default=None)

    s = sub.add_parser("sweep", help="ensembles over a grid of lambdas")
    _common(s)
    s.add_argument("--runs", type=int, default=None)
    s.add_argument("--lambdas", default=None, help="comma list, default --lambda")

    s = sub.add_parser("couple", help="lambda-rescaling coupling")
    _common(s)
    s.add_argument("--lambda2", type=float, default=2.0)
    s.add_argument("--tol", type=float, default=1e-12)

    s = sub.add_parser("firststep", help="KS test of the first step")
    _common(s)
    s.add_argument("--runs", type=int, default=None, help="number of samples")
    return p


# ---------------------------------------------------------------------------


def effective_config(args) -> tuple[SimConfig, dict]:
    """Merge the config file with explicit flags; returns the config and the
    extra (non-SimConfig) settings from the file."""
    data = {}
    if args.config:
        try:
            data = json.loads(pathlib.Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config: {e}") from e
    extra = {k: data.pop(k) for k in ("runs", "epsilon") if k in data}
    flags = {"case": args.case, "lam": args.lam, "v": args.v, "service": args.service,
             "horizon": args.steps, "seed": args.seed}
    data.update({k: v for k, v in flags.items() if v is not None})
    if args.mu is not None:
        data["initial"] = BaselineSpec.parse_mu(args.mu)
    if data.get("case") == "general":
        data.setdefault("service", "exp")
    try:
        return SimConfig.from_json(data), extra
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from e


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _finish(args, cfg, outputs: dict, extra=None, started=None):
    out = pathlib.Path(args.out)
    manifest = {
        "command": args.command,
        "config": cfg.to_json(),
        "outputs": outputs,
        "settings": extra or {},
        "version": __version__,
        "wall_clock": round(time.perf_counter() - started, 6),
    }
    (out / "manifest.json").write_text(_dump(manifest))


def cmd_simulate(args, cfg, extra, out):
    if args.engine == "field":
        traj = direct_simulate(cfg, PointField(cfg.lam, cfg.seed, cfg.initial)).trajectory
    else:
        traj = run_walk(cfg)
    path = out / "trajectory.csv"
    traj.to_csv(path)
    print(f"wrote {cfg.horizon} steps to {path}")
    return OK, {"trajectory": str(path)}, {"engine": args.engine}


def cmd_verify(args, cfg, extra, out):
    runs = args.runs if args.runs is not None else extra.get("runs", 1)
    if runs < 0:
        raise UsageError("--runs must be >= 0")
    if runs == 0:
        print("warning: no seeds given, nothing verified", file=sys.stderr)
    rows, status = [], OK
    for seed in range(cfg.seed, cfg.seed + runs):
        c = replace(cfg, seed=seed)
        try:
            if args.inject_fault:
                field = PointField(c.lam, seed, c.initial)
                run = direct_simulate(c, field)
                (T, E, U), _ = extract_drives(field, run)
                replay = run_walk(c, (T, E, 1.0 - U))
                rep = equivalence_check(run.trajectory, replay, args.tol)
            else:
                rep = coupling_check(c, seed, args.tol)[0]
        except CouplingError as e:
            rows.append({"seed": seed, "passed": False, "first_divergence": None,
                         "detail": str(e)})
            print(f"seed {seed}: FAIL ({e})")
            status = FAILED
            continue
        row = {"seed": seed, "passed": rep.passed, "max_error": rep.max_error,
               "first_divergence": rep.first_divergence}
        rows.append(row)
        if rep.passed:
            print(f"seed {seed}: pass (max error {rep.max_error:.3g})")
        else:
            print(f"seed {seed}: FAIL at step {rep.first_divergence} ({rep.detail})")
            status = FAILED
    path = out / "verify.json"
    path.write_text(_dump({"tol": args.tol, "steps": cfg.horizon, "seeds": rows}))
    return status, {"report": str(path)}, {"runs": runs, "tol": args.tol}


def cmd_blocks(args, cfg, extra, out):
    eps = args.epsilon if args.epsilon is not None else extra.get("epsilon", 0.1)
    if not 0 < eps < 0.5:
        raise UsageError("--epsilon must lie in (0, 1/2)")
    if args.trajectory:
        traj = Trajectory.from_csv(args.trajectory, cfg.case, cfg.lam, cfg.v)
        if np.any(np.isnan(traj.E[1:])):
            raise UsageError("trajectory CSV lacks drive columns")
    else:
        traj = run_walk(cfg)
    scan = restart_scan(traj, make_initial(cfg.initial), eps, cfg.v, cfg.service,
                        args.max_blocks, check=True)
    problems = [p for a in scan.attempts for p in a.problems]
    doc = {
        "epsilon": eps,
        "attempt_offsets": scan.offsets.tolist(),
        "n_star": scan.n_star,
        "truncated": scan.truncated,
        "audit_problems": problems,
        "attempts": [a.report.to_json() for a in scan.attempts],
    }
    path = out / "blocks.json"
    path.write_text(_dump(doc))
    deepest = max((len(a.report.successes) for a in scan.attempts), default=0)
    print(f"{len(scan.offsets)} attempts, {len(scan.attempts)} past block 0, "
          f"deepest run of successes {deepest}, n_* = {scan.n_star}")
    status = FAILED if problems else OK
    return status, {"report": str(path)}, {"epsilon": eps, "max_blocks": args.max_blocks}


def cmd_sweep(args, cfg, extra, out):
    runs = args.runs if args.runs is not None else extra.get("runs", 10)
    if runs < 1:
        raise UsageError("--runs must be >= 1")
    lams = [cfg.lam] if args.lambdas is None else [float(x) for x in args.lambdas.split(",")]
    outputs, summaries = {}, []
    for lam in lams:
        try:
            c = replace(cfg, lam=lam)
        except ValueError as e:
            raise UsageError(str(e)) from e
        summ = run_ensemble(c, runs)
        paths = summ.write(out, stem=f"sweep_lambda_{lam:g}")
        outputs[f"{lam:g}"] = paths
        summaries.append(summ.to_json())
        print(f"lambda {lam:g}: mean slope {summ.mean_slope:.4f}, "
              f"median ratio {summ.median_ratio:.4f}, positive {summ.positive_fraction:.3f}")
    path = out / "sweep.json"
    path.write_text(_dump(summaries))
    outputs["all"] = str(path)
    return OK, outputs, {"runs": runs, "lambdas": lams}


def cmd_couple(args, cfg, extra, out):
    if cfg.v != math.inf:
        raise UsageError("the lambda coupling needs --v inf")
    d = scaling_coupling(cfg.seed, cfg.lam, args.lambda2, cfg.horizon, cfg.case, cfg.v)
    passed = d < args.tol
    path = out / "couple.json"
    path.write_text(_dump({"lambda1": cfg.lam, "lambda2": args.lambda2,
                           "steps": cfg.horizon, "max_discrepancy": d,
                           "tol": args.tol, "passed": passed}))
    print(f"max |S(l2) - (l1/l2) S(l1)| = {d:.3g} -> {'pass' if passed else 'FAIL'}")
    return (OK if passed else FAILED), {"report": str(path)}, {"lambda2": args.lambda2}


def cmd_firststep(args, cfg, extra, out):
    n = args.runs if args.runs is not None else extra.get("runs", 10**5)
    try:
        res = first_step_law(n, cfg.lam, cfg.seed)
    except ValueError as e:
        raise UsageError(str(e)) from e
    passed = res.ks_p > 0.01 and abs(res.side_z) <= 3
    path = out / "firststep.json"
    path.write_text(_dump({**res.__dict__, "passed": passed}))
    print(f"KS p = {res.ks_p:.4f}, left fraction = {res.left_fraction:.4f} "
          f"-> {'pass' if passed else 'FAIL'}")
    return (OK if passed else FAILED), {"report": str(path)}, {"samples": n}


COMMANDS = {"simulate": cmd_simulate, "verify": cmd_verify, "blocks": cmd_blocks,
            "sweep": cmd_sweep, "couple": cmd_couple, "firststep": cmd_firststep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        cfg, extra = effective_config(args)
        out = pathlib.Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        status, outputs, settings = COMMANDS[args.command](args, cfg, extra, out)
    except UsageError as e:
        print(f"greedywalk: error: {e}", file=sys.stderr)
        return USAGE
    _finish(args, cfg, outputs, settings, started)
    return status


if __name__ == "__main__":
    sys.exit(main())
