"""Command-line front end.

Subcommands: ``solve`` (stepwise optimization), ``pmp`` (forward-backward
sweep), ``compare`` (both, over several step counts) and ``list``.

Exit codes: 0 success, 2 usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, kernels, optim, pmp, problems, schedule
from .ode import IntegrationDiverged, TimeGrid

SCHEMA_VERSION = "stepwise.result/1"
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("stepwise")

SOLVE_DEFAULTS = {
    "mode": "fixed", "steps": 3, "optimizer": "ps", "restarts": 30, "seed": 1,
    "budget": 20_000, "workers": 1,
}
PMP_DEFAULTS = {"relax": None, "tol": 1e-3, "max_iter": 500}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config

def _parse_override(text: str):
    key, sep, val = text.partition("=")
    if not sep or not key:
        raise UsageError(f"override {text!r} must look like key=value")
    try:
        return key.strip(), float(val)
    except ValueError:
        raise UsageError(f"override {key} needs a number, got {val!r}")


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    if "manifest" in data:  # a result record: replay its resolved config
        data = data["manifest"]["config"]
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    return data


def _resolve(args, defaults: dict, allowed: set) -> dict:
    """defaults <- config file <- explicit flags."""
    cfg = dict(defaults)
    file_cfg = _load_config(getattr(args, "config", None))
    unknown = sorted(set(file_cfg) - allowed)
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    cfg.update(file_cfg)
    overrides = dict(cfg.get("overrides") or {})
    for text in getattr(args, "override", None) or []:
        k, v = _parse_override(text)
        overrides[k] = v
    cfg["overrides"] = overrides
    for key in allowed - {"overrides", "optimizer_settings"}:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if not cfg.get("problem"):
        raise UsageError("--problem is required")
    return cfg


def _problem(cfg) -> problems.OcpProblem:
    try:
        return problems.builtin(cfg["problem"], cfg.get("overrides"), cfg.get("u_max"))
    except problems.UnknownProblem as exc:
        raise UsageError(str(exc))
    except problems.ParameterError as exc:
        raise UsageError(str(exc))


def _grid(problem, cfg) -> TimeGrid:
    steps = cfg.get("grid_steps") or problem.default_steps
    if int(steps) < 1:
        raise UsageError("--grid-steps must be positive")
    cfg["grid_steps"] = int(steps)
    return TimeGrid.over(problem.T, int(steps))


def _manifest(command: str, cfg: dict) -> dict:
    return {
        "tool": "stepwise",
        "version": __version__,
        "command": command,
        "backend": kernels.BACKEND,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "config": cfg,
    }


def _problem_json(problem) -> dict:
    out = problem.summary()
    out["parameters"] = dict(problem.parameters)
    return out


def _write_json(path: Optional[str], record: dict):
    if path:
        Path(path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trajectory_csv(path: str, times, states, controls, adjoints=None):
    """``t,x1..xn,u1..um[,lam1..lamn]`` with 17 significant digits."""
    states = np.atleast_2d(states)
    controls = np.atleast_2d(controls)
    header = (["t"] + [f"x{i + 1}" for i in range(states.shape[1])]
              + [f"u{i + 1}" for i in range(controls.shape[1])])
    if adjoints is not None:
        header += [f"lam{i + 1}" for i in range(states.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k, t in enumerate(times):
            row = [t, *states[k], *controls[k]]
            if adjoints is not None:
                row += list(adjoints[k])
            w.writerow([_fmt(v) for v in row])


# ---------------------------------------------------------------- solve

SOLVE_KEYS = {"problem", "overrides", "u_max", "mode", "steps", "optimizer",
              "restarts", "seed", "budget", "grid_steps", "workers",
              "optimizer_settings"}


def _optimizer_config(obj, cfg) -> optim.OptimizerConfig:
    settings = dict(cfg.get("optimizer_settings") or {})
    fields = set(optim.OptimizerConfig.__dataclass_fields__) - {"method", "bounds"}
    unknown = sorted(set(settings) - fields)
    if unknown:
        raise UsageError(f"unknown optimizer setting(s): {', '.join(unknown)}")
    settings.update(budget=int(cfg["budget"]), seed=int(cfg["seed"]))
    try:
        oc = optim.OptimizerConfig(cfg["optimizer"], obj.bounds, **settings)
    except ValueError as exc:
        raise UsageError(str(exc))
    cfg["optimizer_settings"] = {k: v for k, v in oc.settings().items()
                                 if k not in ("budget", "seed")}
    return oc


def run_solve(cfg: dict, problem=None):
    """Resolved config -> (record, summary, best schedule, objective)."""
    problem = problem or _problem(cfg)
    grid = _grid(problem, cfg)
    if cfg["mode"] not in schedule.KINDS:
        raise UsageError(f"--mode must be one of {', '.join(schedule.KINDS)}")
    if int(cfg["steps"]) < 1 or int(cfg["restarts"]) < 1:
        raise UsageError("--steps and --restarts must be positive")
    obj = problems.StepwiseObjective(problem, cfg["mode"], int(cfg["steps"]), grid)
    oc = _optimizer_config(obj, cfg)
    t0 = time.perf_counter()
    summary = optim.multi_restart(oc.method, obj, oc, int(cfg["restarts"]),
                                  workers=int(cfg.get("workers") or 1))
    wall = time.perf_counter() - t0
    best = obj.decode(summary.best.x)
    report = problems.evaluate_cost(problem, best, grid)
    record = {
        "schema_version": SCHEMA_VERSION,
        "kind": "solve",
        "manifest": _manifest("solve", cfg),
        "problem": _problem_json(problem),
        "schedule": best.to_json(),
        "decision_vector": summary.best.x.tolist(),
        "cost": report.to_json(),
        "restarts": summary.to_json(),
        "timing": {"wall_time": wall},
    }
    return record, summary, best, report


def cmd_solve(args) -> int:
    cfg = _resolve(args, SOLVE_DEFAULTS, SOLVE_KEYS)
    cfg["optimizer"] = _short_method(cfg["optimizer"])
    problem = _problem(cfg)
    record, summary, best, report = run_solve(cfg, problem)
    _write_json(args.out, record)
    if args.traj:
        traj = problems.simulate(problem, best, TimeGrid.over(problem.T, cfg["grid_steps"]))
        write_trajectory_csv(args.traj, traj.times, traj.states, traj.controls)
    evals = sum(r.evaluations for r in summary.runs)
    print(f"{problem.name} {cfg['mode']} n={cfg['steps']} {cfg['optimizer']} "
          f"best={report.minimized:.10g} raw={report.raw:.10g} "
          f"evaluations={evals} wall={record['timing']['wall_time']:.2f}s")
    return EXIT_OK


def _short_method(name: str) -> str:
    try:
        full = optim.method_name(name)
    except ValueError as exc:
        raise UsageError(str(exc))
    return {v: k for k, v in optim.ALIASES.items()}[full]


# ---------------------------------------------------------------- pmp

PMP_KEYS = {"problem", "overrides", "u_max", "grid_steps", "relax", "tol", "max_iter"}


def run_pmp(cfg: dict, problem=None):
    problem = problem or _problem(cfg)
    grid = _grid(problem, cfg)
    if cfg.get("relax") is None:
        cfg["relax"] = problem.sweep_relax
    try:
        t0 = time.perf_counter()
        res = pmp.fbs(problem, grid, relax=float(cfg["relax"]), tol=float(cfg["tol"]),
                      max_iter=int(cfg["max_iter"]))
        wall = time.perf_counter() - t0
    except ValueError as exc:
        raise UsageError(str(exc))
    record = {
        "schema_version": SCHEMA_VERSION,
        "kind": "pmp",
        "manifest": _manifest("pmp", cfg),
        "problem": _problem_json(problem),
        "sweep": res.to_json(),
        "cost": {"raw": res.raw, "minimized": res.minimized,
                 "feasible": bool(np.isfinite(res.minimized)),
                 "grid_steps": grid.step_count},
        "timing": {"wall_time": wall},
    }
    return record, res


def cmd_pmp(args) -> int:
    cfg = _resolve(args, PMP_DEFAULTS, PMP_KEYS)
    problem = _problem(cfg)
    record, res = run_pmp(cfg, problem)
    _write_json(args.out, record)
    if args.traj:
        write_trajectory_csv(args.traj, res.times, res.states, res.controls, res.adjoints)
    if not res.converged:
        print(f"warning: sweep did not converge in {res.iterations} iterations",
              file=sys.stderr)
    print(f"{problem.name} pmp raw={res.raw:.10g} minimized={res.minimized:.10g} "
          f"iterations={res.iterations} converged={str(res.converged).lower()} "
          f"wall={record['timing']['wall_time']:.2f}s")
    return EXIT_OK


# ---------------------------------------------------------------- compare

COMPARE_KEYS = SOLVE_KEYS - {"steps"} | {"steps_list", "relax", "tol", "max_iter"}


def _steps_list(value) -> list[int]:
    if isinstance(value, str):
        try:
            out = [int(s) for s in value.split(",") if s.strip()]
        except ValueError:
            raise UsageError(f"--steps-list needs integers, got {value!r}")
    else:
        out = [int(s) for s in value]
    if not out or min(out) < 1:
        raise UsageError("--steps-list needs positive integers")
    return out


def cmd_compare(args) -> int:
    cfg = _resolve(args, {**SOLVE_DEFAULTS, **PMP_DEFAULTS, "steps_list": "3,5"},
                   COMPARE_KEYS)
    cfg["optimizer"] = _short_method(cfg["optimizer"])
    cfg["steps_list"] = _steps_list(cfg["steps_list"])
    cfg.pop("steps", None)
    problem = _problem(cfg)
    pmp_cfg = {k: cfg.get(k) for k in PMP_KEYS}
    pmp_record, res = run_pmp(pmp_cfg, problem)
    cfg["relax"] = pmp_cfg["relax"]
    cfg["grid_steps"] = pmp_cfg["grid_steps"]
    rows = [{"method": "pmp", "steps": None, "minimized": res.minimized,
             "raw": res.raw, "gap_to_pmp": 0.0}]
    solves = []
    for n in cfg["steps_list"]:
        scfg = {k: v for k, v in cfg.items() if k in SOLVE_KEYS}
        scfg["steps"] = n
        record, summary, best, report = run_solve(scfg, problem)
        cfg["optimizer_settings"] = scfg["optimizer_settings"]
        solves.append(record)
        rows.append({"method": f"stepwise-{cfg['mode']}-{cfg['optimizer']}",
                     "steps": n, "minimized": report.minimized, "raw": report.raw,
                     "gap_to_pmp": report.minimized - res.minimized})
    record = {
        "schema_version": SCHEMA_VERSION,
        "kind": "compare",
        "manifest": _manifest("compare", cfg),
        "problem": _problem_json(problem),
        "comparison": rows,
        "sweep": pmp_record["sweep"],
        "runs": [{"steps": r["manifest"]["config"]["steps"], "schedule": r["schedule"],
                  "cost": r["cost"], "restarts": r["restarts"]} for r in solves],
        "timing": {"wall_time": pmp_record["timing"]["wall_time"]
                   + sum(r["timing"]["wall_time"] for r in solves)},
    }
    _write_json(args.out, record)
    print(format_table(rows))
    if not res.converged:
        print("warning: sweep did not converge", file=sys.stderr)
    return EXIT_OK


def format_table(rows) -> str:
    head = ("method", "steps", "minimized", "raw", "gap_to_pmp")
    body = [(r["method"], "-" if r["steps"] is None else str(r["steps"]),
             f"{r['minimized']:.10g}", f"{r['raw']:.10g}", f"{r['gap_to_pmp']:.4g}")
            for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(head)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths))]
    lines += ["  ".join(c.ljust(w) for c, w in zip(b, widths)) for b in body]
    return "\n".join(lines)


# ---------------------------------------------------------------- list

def cmd_list(args) -> int:
    names = problems.NAMES
    if args.problem:
        if args.problem not in names:
            raise UsageError(f"unknown problem {args.problem!r}; "
                             f"valid names: {', '.join(names)}")
        names = (args.problem,)
    info = [_problem_json(problems.builtin(n)) for n in names]
    if args.json:
        print(json.dumps(info, indent=2, sort_keys=True))
        return EXIT_OK
    for p in info:
        print(f"{p['name']:<6} n_x={p['n_x']} m={p['m']} T={p['T']:g} "
              f"sense={p['sense']} bounds={p['bounds'][0]} "
              f"default_steps={p['default_steps']}")
        if args.problem:
            for k, v in p["parameters"].items():
                print(f"    {k} = {v:g}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _common(p, *, out=True):
    p.add_argument("--problem", help=f"one of {', '.join(problems.NAMES)}")
    p.add_argument("--override", action="append", metavar="KEY=VALUE",
                   help="override a problem parameter (repeatable)")
    p.add_argument("--u-max", dest="u_max", type=float,
                   help="upper control bound (chemo/dsdi)")
    p.add_argument("--grid-steps", dest="grid_steps", type=int,
                   help="RK4 steps over the horizon (default per problem)")
    p.add_argument("--config", help="JSON config or result record; flags win")
    if out:
        p.add_argument("--out", help="write the result record (JSON)")


def _solve_flags(p):
    p.add_argument("--mode", choices=schedule.KINDS)
    p.add_argument("--optimizer", help="ps, sa or ga")
    p.add_argument("--restarts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int, help="evaluations per run")
    p.add_argument("--workers", type=int, help="threads for restarts")


def _pmp_flags(p):
    p.add_argument("--relax", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stepwise", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="optimize a piecewise-constant control")
    _common(p)
    _solve_flags(p)
    p.add_argument("--steps", type=int, help="number of control segments")
    p.add_argument("--traj", help="write the best trajectory (CSV)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("pmp", help="forward-backward sweep baseline")
    _common(p)
    _pmp_flags(p)
    p.add_argument("--traj", help="write states, controls and adjoints (CSV)")
    p.set_defaults(func=cmd_pmp)

    p = sub.add_parser("compare", help="sweep baseline vs stepwise step counts")
    _common(p)
    _solve_flags(p)
    _pmp_flags(p)
    p.add_argument("--steps-list", dest="steps_list", help="comma-separated, e.g. 3,5,10")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("list", help="show the built-in problems")
    p.add_argument("--json", action="store_true")
    p.add_argument("--problem")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"stepwise: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationDiverged, *kernels.diverged_types()) as exc:
        print(f"stepwise: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
