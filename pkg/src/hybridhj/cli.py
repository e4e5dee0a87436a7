"""Command-line entry point: ``hybridhj <command> [options]``.

Exit codes: 0 success, 1 verification or comparison failure, 2 usage or
configuration error, 3 runtime error. A Zeno stop counts as success; the
termination reason is written to the outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import scenarios
from .errors import BadParameters, ConfigError, HybridHJError
from .export import dumps, events_payload, write_json, write_trajectory_csv
from .hybrid import SimPolicy, ZenoPolicy, check_hybrid_constant, simulate_hybrid
from .integrate import StepPolicy
from .phase import PhasePoint
from .reconstruct import compare, reconstruct
from .suite import verify_scenario

log = logging.getLogger("hybridhj")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
COMMANDS = ("simulate", "verify-hj", "reconstruct", "compare", "list-scenarios")
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
SINGLE_FLAGS = ("--scenario", "--out", "--h", "--horizon", "--jobs")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hybridhj", description="Hybrid Hamiltonian simulation and HJ verification.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    for name, help_ in [
        ("simulate", "integrate the hybrid system and write trajectory.csv and events.json"),
        ("verify-hj", "check the scenario's solution family and write residuals.json"),
        ("reconstruct", "rebuild the trajectory from the solution family"),
        ("compare", "compare direct simulation with reconstruction and write comparison.json"),
    ]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", nargs="+", metavar="PATH", default=None,
                       help="config file; several files run as a batch")
        p.add_argument("--scenario", help="scenario name (overrides the config)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override: section.key=value, or a bare scenario parameter")
        p.add_argument("--out", help="output directory")
        p.add_argument("--h", type=float, help="step size")
        p.add_argument("--horizon", type=float, help="final time")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers across batch configs")
    p = sub.add_parser("list-scenarios", help="print available scenarios")
    p.add_argument("--json", action="store_true", help="print machine-readable descriptors")
    return parser


def _warn_duplicates(argv: list[str]) -> None:
    seen: dict[str, int] = {}
    for a in argv:
        flag = a.split("=", 1)[0]
        if flag in SINGLE_FLAGS:
            seen[flag] = seen.get(flag, 0) + 1
    for flag, n in seen.items():
        if n > 1:
            log.warning("%s given %d times; using the last value", flag, n)


def _configure_logging() -> None:
    raw = os.environ.get("HYBRIDHJ_LOG", "warn").strip().lower()
    level = LOG_LEVELS.get(raw)
    logging.basicConfig(format="%(levelname)s: %(message)s", stream=sys.stderr)
    log.setLevel(level or logging.WARNING)
    logging.captureWarnings(True)
    if level is None:
        log.warning("HYBRIDHJ_LOG=%r is not one of %s; using warn", raw, ", ".join(LOG_LEVELS))


def resolve_config(args, path) -> cfgmod.RunConfig:
    cfg = cfgmod.load(path) if path else cfgmod.RunConfig()
    sets = [cfgmod.parse_assignment(s) for s in args.set]
    if args.scenario is not None:
        sets.append(("scenario", "name", args.scenario))
    if args.h is not None:
        sets.append(("run", "h", args.h))
    if args.horizon is not None:
        sets.append(("run", "horizon", args.horizon))
    if args.out is not None:
        sets.append(("output", "dir", args.out))
    cfg = cfgmod.apply_overrides(cfg, sets)
    if cfg.scenario is None:
        raise ConfigError("no scenario given; use --scenario or [scenario] name")
    return cfg


def build_scenario(cfg: cfgmod.RunConfig) -> scenarios.Scenario:
    if cfg.scenario not in scenarios.names():
        raise ConfigError(f"unknown scenario {cfg.scenario!r}; available: {', '.join(scenarios.names())}")
    sc = scenarios.get(cfg.scenario, **cfg.params)
    zeno = ZenoPolicy(cfg.run_value("max_impacts"), cfg.run_value("zeno_dt"))
    return dataclasses.replace(sc, spec=dataclasses.replace(sc.spec, zeno=zeno))


def sim_policy(cfg: cfgmod.RunConfig) -> SimPolicy:
    step = StepPolicy(h=cfg.run_value("h"), adaptive=cfg.run_value("adaptive"),
                      h_min=cfg.run_value("h_min"), local_tol=cfg.run_value("local_tol"))
    return SimPolicy(step, guard_tol=cfg.tol("guard_tol"), time_tol=cfg.tol("time_tol"),
                     adm_tol=cfg.tol("adm_tol"), constraint_tol=cfg.tol("constraint_tol"))


def _vector(name: str, v, n: int) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (n,):
        raise ConfigError(f"{name} must have {n} entries, got {len(v)}")
    return a


def initial_data(cfg: cfgmod.RunConfig, sc: scenarios.Scenario):
    """``(q0, lam0, region0, x0)`` from the config with scenario defaults filled in."""
    n = sc.model.n
    q0 = _vector("[run] q0", cfg.run["q0"], n) if "q0" in cfg.run else (sc.q0 if sc.q0 is not None else sc.x0.q)
    lam0, region0 = sc.lam0, cfg.family.get("region0", sc.region0)
    if "lambda0" in cfg.family:
        if sc.family is None:
            raise ConfigError(f"scenario {sc.name} has no solution family; [family] lambda0 does not apply")
        lam0 = np.asarray(cfg.family["lambda0"], dtype=float)
        if lam0.size < sc.family.param_dim:
            raise ConfigError(f"[family] lambda0 needs at least {sc.family.param_dim} entries")
    if lam0 is not None and sc.check_lambda is not None:
        sc.check_lambda(lam0)
    if sc.family is not None and region0 not in [r.id for r in sc.family.regions]:
        raise ConfigError(f"[family] region0 = {region0} is not a region of {sc.name}")
    if "p0" in cfg.run:
        x0 = PhasePoint(q0, _vector("[run] p0", cfg.run["p0"], n))
    elif sc.family is not None and ("q0" in cfg.run or "lambda0" in cfg.family):
        x0 = PhasePoint(q0, sc.family(region0, q0, lam0))
    elif "q0" in cfg.run:
        x0 = PhasePoint(q0, sc.x0.p)
    else:
        x0 = sc.x0
    return q0, lam0, region0, x0


def _require_family(sc: scenarios.Scenario) -> None:
    if sc.family is None:
        raise ConfigError(f"scenario {sc.name} has no solution family")


def cmd_simulate(cfg: cfgmod.RunConfig) -> int:
    sc = build_scenario(cfg)
    _, _, _, x0 = initial_data(cfg, sc)
    traj = simulate_hybrid(sc.spec, x0, cfg.run_value("horizon"), sim_policy(cfg))
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out / "trajectory.csv", traj, sc.model.angle_indices)
    write_json(out / "events.json", events_payload(traj))
    print(f"scenario {sc.name}: {len(traj.events)} impacts, termination {traj.termination}, "
          f"t_end {traj.t_end:.17g}")
    for name, fn in sc.constants.items():
        rep = check_hybrid_constant(sc.spec, fn, traj)
        print(f"  hybrid constant {name}: max drift {rep.max_drift:.3e}")
    return EXIT_OK


def cmd_verify(cfg: cfgmod.RunConfig) -> int:
    sc = build_scenario(cfg)
    _require_family(sc)
    _, lam0, _, _ = initial_data(cfg, sc)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    report = verify_scenario(sc, lam0, samples=cfg.run_value("samples"),
                             impact_samples=cfg.run_value("impact_samples"),
                             grid_samples=cfg.run_value("grid_samples"), seed=cfg.run_value("seed"),
                             pass_tol=cfg.tolerances.get("pass_tol"))
    write_json(out / "residuals.json", report)
    for r in report["residuals"]:
        print(f"region {r['region']} {r['check']}: max residual {r['max_residual']:.3e} "
              f"({'pass' if r['passed'] else 'FAIL'})")
    d = report["delta_relatedness"]
    if d.get("error"):
        print(f"delta relatedness: {d['error']} ({d['message']})")
    else:
        print(f"delta relatedness: max residual {d['max_residual']:.3e} ({'pass' if d['passed'] else 'FAIL'})")
    c = report["complete_solution"]
    print(f"complete solution: min |det| {c['details']['min_abs_det']:.3e}, "
          f"{'pass' if c['passed'] else 'FAIL'}{' (' + c['error'] + ')' if c['error'] else ''}")
    print("verify-hj: " + ("pass" if report["passed"] else "FAIL"))
    return EXIT_OK if report["passed"] else EXIT_FAIL


def _reconstruct(cfg: cfgmod.RunConfig, sc: scenarios.Scenario):
    q0, lam0, region0, _ = initial_data(cfg, sc)
    return reconstruct(sc.spec, sc.family, sc.transfer, q0, lam0, region0, cfg.run_value("horizon"),
                       sim_policy(cfg), lift_tol=cfg.tol("lift_tol"))


def cmd_reconstruct(cfg: cfgmod.RunConfig) -> int:
    sc = build_scenario(cfg)
    _require_family(sc)
    run = _reconstruct(cfg, sc)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out / "trajectory.csv", run.lifted, sc.model.angle_indices)
    write_json(out / "events.json", events_payload(run.lifted))
    write_json(out / "transfer_log.json", {"transfers": [r.to_dict() for r in run.transfer_log],
                                           "termination": run.lifted.termination})
    mismatch = run.max_lift_mismatch
    ok = mismatch <= cfg.tol("lift_tol")
    print(f"scenario {sc.name}: {len(run.transfer_log)} transfers, termination {run.lifted.termination}, "
          f"max lift mismatch {mismatch:.3e} ({'pass' if ok else 'FAIL'})")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_compare(cfg: cfgmod.RunConfig) -> int:
    sc = build_scenario(cfg)
    _require_family(sc)
    q0, lam0, region0, _ = initial_data(cfg, sc)
    x0 = PhasePoint(q0, sc.family(region0, q0, lam0))
    direct = simulate_hybrid(sc.spec, x0, cfg.run_value("horizon"), sim_policy(cfg))
    run = _reconstruct(cfg, sc)
    rep = compare(direct, run.lifted)
    tol = cfg.tol("compare_tol")
    ok = rep.sup_discrepancy <= tol and not rep.count_mismatch
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    payload = rep.to_dict()
    payload.update({"scenario": sc.name, "compare_tol": tol, "h": cfg.run_value("h"),
                    "horizon": cfg.run_value("horizon"), "passed": ok,
                    "direct_termination": direct.termination, "lifted_termination": run.lifted.termination})
    write_json(out / "comparison.json", payload)
    print(f"scenario {sc.name}: sup discrepancy {rep.sup_discrepancy:.3e}, max impact time diff "
          f"{rep.max_impact_time_diff:.3e}, impacts {rep.direct_impacts}/{rep.lifted_impacts} "
          f"({'pass' if ok else 'FAIL'})")
    return EXIT_OK if ok else EXIT_FAIL


HANDLERS = {"simulate": cmd_simulate, "verify-hj": cmd_verify, "reconstruct": cmd_reconstruct,
            "compare": cmd_compare}


def run_one(command: str, cfg: cfgmod.RunConfig) -> int:
    """Run one command on one resolved config and map errors to exit codes."""
    try:
        return HANDLERS[command](cfg)
    except (ConfigError, BadParameters) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HybridHJError as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _batch_worker(item):
    command, text = item
    _configure_logging()
    return run_one(command, cfgmod.loads(text))


def list_scenarios(as_json: bool) -> int:
    if as_json:
        print(dumps([scenarios.get(n).descriptor() for n in scenarios.names()]))
        return EXIT_OK
    for n in scenarios.names():
        sc = scenarios.get(n)
        params = ", ".join(f"{k}={v:g}" for k, v in sc.schema.items()) or "no parameters"
        print(f"{n}: {sc.description} [{params}]")
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _configure_logging()
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _warn_duplicates(argv)
    if args.command == "list-scenarios":
        return list_scenarios(args.json)
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_USAGE

    paths = args.config or [None]
    try:
        configs = [resolve_config(args, p) for p in paths]
    except (ConfigError, BadParameters) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if len(configs) == 1:
        return run_one(args.command, configs[0])

    # batch: each config writes to its own subdirectory named after the file
    items, used = [], set()
    for i, (p, cfg) in enumerate(zip(paths, configs)):
        stem = Path(p).stem
        stem = f"{stem}_{i}" if stem in used else stem
        used.add(stem)
        cfg.output["dir"] = str(cfg.out_dir / stem)
        items.append((args.command, cfgmod.dumps(cfg)))
    if args.jobs == 1:
        codes = [_batch_worker(it) for it in items]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_batch_worker, items))
    for p, code in zip(paths, codes):
        log.info("%s: exit %d", p, code)
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
