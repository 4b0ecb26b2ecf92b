"""Command-line entry point.

Exit codes: 0 success, 1 invalid input (bad config, bad scheduler, bad
arguments), 2 computation failure (state space too large, solver did not
converge, stationary ranking disagreeing with the stable set).
"""
from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .dynamics import InvalidRunConfig, RunConfig, run, write_json, write_ppm, write_trace
from .exact import (NoConvergence, TooLarge, beta_sweep, build_matrix, enumerate_states,
                    project_to_configs, stationary)
from .lattice import TorusGrid
from .model import ModelParams
from .scheduler import SchedulerFileError, load_scheduler_file, validate
from .stability import (CrossCheckMismatch, Unreachable, build_resistance_graph, cross_check,
                        max_segregated, stable_report, stochastically_stable)

EXIT_OK, EXIT_INVALID, EXIT_COMPUTE = 0, 1, 2


class ParseError(ValueError):
    pass


class UsageError(Exception):
    pass


# -- run configs --------------------------------------------------------------

_INT_FIELDS = ("n", "red_count", "steps", "seed", "record_every", "snapshot_every")
_REAL_FIELDS = ("r", "beta")
_ALLOWED = set(RunConfig.__dataclass_fields__)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_real(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def load_run_config(path) -> RunConfig:
    """Strictly parse a JSON run config; every problem is reported at once."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    problems = [f"unknown field {k!r}" for k in raw if k not in _ALLOWED]
    for k in ("n", "red_count"):
        if k not in raw:
            problems.append(f"missing required field {k!r}")
    for k in _INT_FIELDS:
        if k in raw and not _is_int(raw[k]):
            problems.append(f"field {k!r} must be an integer, got {raw[k]!r}")
    for k in _REAL_FIELDS:
        if k in raw:
            if _is_real(raw[k]):
                raw[k] = float(raw[k])
            else:
                problems.append(f"field {k!r} must be a number, got {raw[k]!r}")
    if raw.get("self_weight") is not None and not _is_real(raw["self_weight"]):
        problems.append(f"field 'self_weight' must be a number, got {raw['self_weight']!r}")
    for k in ("scheduler", "scheduler_file"):
        if raw.get(k) is not None and not isinstance(raw[k], str):
            problems.append(f"field {k!r} must be a string")
    eps = raw.get("eps")
    if eps is not None:
        if not isinstance(eps, list) or not all(_is_real(x) for x in eps):
            problems.append("field 'eps' must be a list of numbers")
        else:
            raw["eps"] = tuple(float(x) for x in eps)
    initial = raw.get("initial")
    if isinstance(initial, list) and all(isinstance(row, str) for row in initial):
        raw["initial"] = "".join(initial)
    elif initial is not None and not isinstance(initial, str):
        problems.append("field 'initial' must be a '+'/'-' string or a list of row strings")
    if problems:
        raise InvalidRunConfig([f"{path}: {p}" for p in problems])
    cfg = RunConfig(**{k: v for k, v in raw.items() if k in _ALLOWED})
    if cfg.scheduler_file is not None and not Path(cfg.scheduler_file).is_absolute():
        cfg = _replace(cfg, scheduler_file=str(path.parent / cfg.scheduler_file))
    problems = cfg.problems()
    if problems:
        raise InvalidRunConfig([f"{path}: {p}" for p in problems])
    return cfg


def _replace(cfg: RunConfig, **changes) -> RunConfig:
    d = cfg.to_dict()
    d.update(changes)
    if d.get("eps") is not None:
        d["eps"] = tuple(d["eps"])
    return RunConfig(**d)


_GEOMETRIC = re.compile(r"^\s*geometric\(\s*([^,]+),\s*([^,]+),\s*(\d+)\s*\)\s*$")


def parse_betas(text: str) -> list[float]:
    """``"1,2,4"``, ``"[1, 2, 4]"`` or ``"geometric(start, stop, count)"``."""
    m = _GEOMETRIC.match(text)
    try:
        if m:
            start, stop, count = float(m.group(1)), float(m.group(2)), int(m.group(3))
            if count < 1 or start <= 0 or stop <= 0:
                raise ValueError
            betas = np.geomspace(start, stop, count).tolist()
        else:
            stripped = text.strip().removeprefix("[").removesuffix("]")
            betas = [float(x) for x in stripped.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"cannot parse beta list {text!r}") from None
    if not betas or any(not b > 0 for b in betas):
        raise UsageError(f"beta list must be non-empty and positive, got {text!r}")
    return betas


# -- commands -----------------------------------------------------------------


def _manifest(args, command: str, cfg: RunConfig | None, outputs: list[str], **extra) -> dict:
    out = {
        "tool": "schelling-stability",
        "version": __version__,
        "command": command,
        "argv": list(args.argv),
        "backend": kernels.BACKEND,
    }
    if cfg is not None:
        out["run_config"] = cfg.to_dict()
        out["seed"] = cfg.seed
    out.update(extra)
    out["outputs"] = outputs
    return out


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = load_run_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.steps is not None:
        changes["steps"] = args.steps
    if args.snapshot_every is not None:
        changes["snapshot_every"] = args.snapshot_every
    if changes:
        cfg = _replace(cfg, **changes).validate()
    spec = cfg.make_scheduler()
    out = _out_dir(args)
    outputs = ["trace.jsonl", "summary.json"]
    on_snapshot = None
    if cfg.snapshot_every:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        outputs.append("snapshots/")

        def on_snapshot(step, colors):
            write_ppm(snap_dir / f"step_{step:08d}.ppm", cfg.grid, colors)

    result = run(cfg, spec=spec, on_snapshot=on_snapshot)
    write_trace(result, out / "trace.jsonl")
    write_json(result.summary(), out / "summary.json")
    write_json(_manifest(args, "simulate", cfg, outputs), out / "manifest.json")
    print(f"simulated {cfg.steps} steps; time-average bichromatic edges {result.mean_bichromatic:.6g}")
    return EXIT_OK


def _space_for(cfg: RunConfig, args):
    spec = cfg.make_scheduler()
    violations = validate(spec)
    if violations:
        for v in violations:
            print(v.describe(spec.grid), file=sys.stderr)
        raise InvalidRunConfig([f"scheduler has {len(violations)} violation(s)"])
    space = enumerate_states(cfg.grid, cfg.red_count, spec, allow_large=args.allow_large)
    return spec, space


def cmd_exact(args) -> int:
    cfg = load_run_config(args.config)
    betas = parse_betas(args.betas)
    spec, space = _space_for(cfg, args)
    q = max_segregated(cfg.grid, cfg.red_count, allow_large=args.allow_large)
    in_q = np.isin(space.masks, q.masks)
    results = []
    for beta in betas:
        params = ModelParams(r=cfg.r, beta=beta, eps=cfg.eps)
        dist = stationary(build_matrix(space, spec, params), method=args.method)
        cm = project_to_configs(space, dist)
        results.append({
            "beta": beta,
            "residual": dist.residual,
            "method": dist.method,
            "mass_on_max_segregated": float(cm[in_q].sum()),
            "configurations": [{"config": space.config_string(i), "probability": float(cm[i])}
                               for i in range(space.num_configs)],
        })
        print(f"beta={beta:g}: residual {dist.residual:.2e}, mass on max-segregated {cm[in_q].sum():.6f}")
    out = _out_dir(args)
    write_json({"n": cfg.n, "red_count": cfg.red_count, "scheduler": spec.kind,
                "num_states": space.size, "results": results}, out / "exact.json")
    write_json(_manifest(args, "exact", cfg, ["exact.json"], betas=betas), out / "manifest.json")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_run_config(args.config)
    betas = parse_betas(args.betas)
    spec, space = _space_for(cfg, args)
    rows = beta_sweep(cfg.grid, cfg.red_count, spec, cfg.params, betas, top=args.top, space=space,
                      method=args.method, allow_large=args.allow_large)
    out = _out_dir(args)
    write_json({"n": cfg.n, "red_count": cfg.red_count, "scheduler": spec.kind,
                "rows": [{"beta": r.beta, "mass_on_Q": r.mass_on_q, "residual": r.residual,
                          "top": [{"config": c, "probability": p} for c, p in r.top]} for r in rows]},
               out / "sweep.json")
    with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["beta", "mass_on_Q"]
        for k in range(1, args.top + 1):
            header += [f"config_{k}", f"probability_{k}"]
        writer.writerow(header)
        for r in rows:
            line = [repr(r.beta), repr(r.mass_on_q)]
            for c, p in r.top:
                line += [c, repr(p)]
            writer.writerow(line)
    for r in rows:
        print(f"beta={r.beta:g}: mass on Q {r.mass_on_q:.6f}")
    write_json(_manifest(args, "sweep", cfg, ["sweep.json", "sweep.csv"], betas=betas), out / "manifest.json")
    return EXIT_OK


def cmd_stable(args) -> int:
    cfg = load_run_config(args.config)
    spec, space = _space_for(cfg, args)
    graph = build_resistance_graph(space, spec, cfg.params)
    stable = stochastically_stable(space, graph, exhaustive=args.exhaustive)
    q = max_segregated(cfg.grid, cfg.red_count, allow_large=args.allow_large)
    report = stable_report(space, stable, q)
    if args.cross_check_beta is not None:
        check = cross_check(space, spec, cfg.params, args.cross_check_beta, stable=stable)
        report["cross_check"] = {
            "beta": check.beta, "residual": check.residual, "states_agree": check.states_agree,
            "configs_agree": check.configs_agree, "state_mass_gap": check.state_mass_gap,
            "config_mass_gap": check.config_mass_gap,
        }
    out = _out_dir(args)
    write_json(report, out / "stable.json")
    write_json(_manifest(args, "stable", cfg, ["stable.json"]), out / "manifest.json")
    print(f"stable states: {report['num_stable_states']} in {len(report['stable_configurations'])} configurations; "
          f"minimum tree resistance {report['min_resistance']:g}; "
          f"all maximally segregated: {report['subset_of_max_segregated']}")
    if args.cross_check_beta is not None and not check.agrees:
        raise CrossCheckMismatch(check)
    return EXIT_OK


def cmd_minseg(args) -> int:
    grid = TorusGrid(args.n)
    if not 0 <= args.red <= grid.num_vertices:
        raise UsageError(f"--red must lie in [0, {grid.num_vertices}]")
    q = max_segregated(grid, args.red, allow_large=args.allow_large)
    print(f"minimum bichromatic edges: {q.min_bichromatic}")
    print(f"argmin configurations: {len(q)}")
    if args.out:
        out = _out_dir(args)
        from .model import config_from_mask, config_to_string
        write_json({"n": args.n, "red_count": args.red, "min_bichromatic_edges": q.min_bichromatic,
                    "argmin_count": len(q),
                    "argmin": [config_to_string(config_from_mask(int(k), grid.num_vertices)) for k in q.masks]},
                   out / "minseg.json")
        write_json(_manifest(args, "minseg", None, ["minseg.json"], n=args.n, red_count=args.red),
                   out / "manifest.json")
    return EXIT_OK


def cmd_validate_scheduler(args) -> int:
    spec = load_scheduler_file(args.file, n=args.n)
    violations = validate(spec)
    if violations:
        for v in violations:
            print(v.describe(spec.grid), file=sys.stderr)
        print(f"{len(violations)} violation(s)", file=sys.stderr)
        return EXIT_INVALID
    print(f"ok: {spec.num_pairs} pairs on the {spec.grid.n}x{spec.grid.n} torus")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="schelling-stability", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="Monte Carlo run from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--snapshot-every", type=int, help="write a PPM grid image every k steps")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_simulate)

    for name, func, helptext in (("exact", cmd_exact, "exact stationary distributions"),
                                 ("sweep", cmd_sweep, "beta sweep: mass on maximally segregated states")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True)
        p.add_argument("--betas", required=True, help='"1,2,4" or "geometric(1,8,4)"')
        p.add_argument("--method", choices=["direct", "power", "gth"], default="direct")
        p.add_argument("--allow-large", action="store_true")
        p.add_argument("--out", default="out")
        if name == "sweep":
            p.add_argument("--top", type=int, default=5)
        p.set_defaults(func=func)

    p = sub.add_parser("stable", help="stochastically stable states via minimum-resistance trees")
    p.add_argument("--config", required=True)
    p.add_argument("--exhaustive", action="store_true", help="solve a tree for every root")
    p.add_argument("--cross-check-beta", type=float)
    p.add_argument("--allow-large", action="store_true")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_stable)

    p = sub.add_parser("minseg", help="exhaustive maximal segregation")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--red", type=int, required=True)
    p.add_argument("--allow-large", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_minseg)

    p = sub.add_parser("validate-scheduler", help="check a custom scheduler file")
    p.add_argument("--file", required=True)
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_validate_scheduler)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        args.argv = argv
        return args.func(args)
    # TooLarge is a ValueError, so compute failures are matched first
    except (TooLarge, NoConvergence, Unreachable, CrossCheckMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except (UsageError, ParseError, InvalidRunConfig, SchedulerFileError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
