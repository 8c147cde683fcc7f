"""Command line interface: ``trapflow run|equilibrium|sweep-eps|verify``.

Exit codes: 0 success, 2 validation error, 3 solver failure, 4 property
suite failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import SchemaError, ScenarioConfig, load_config, materialize
from .core import (
    ChargeNeutralityViolation,
    CompatibilityViolation,
    TrapflowError,
    ValidationError,
)
from .stepper import run
from .verify import run_verify

log = logging.getLogger("trapflow")

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_PROPERTY = 0, 2, 3, 4

CSV_COLUMNS = (
    "t", "E", "E_rel", "P", "Q", "l1_n", "l1_p", "linf_n", "linf_p", "linf_ntr",
    "h2proxy_psi", "min_n", "min_p", "min_ntr", "max_ntr",
)
_REPORT_FIELD = {
    "E": "entropy", "E_rel": "relative_entropy", "P": "production", "Q": "charge",
}


def _fmt(x) -> str:
    return repr(float(x))


def write_trajectory_csv(path, trajectory):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for s in trajectory.samples:
            writer.writerow([_fmt(getattr(s, _REPORT_FIELD.get(c, c))) for c in CSV_COLUMNS])


def write_field_csv(path, grid, values):
    axes = ["x", "y"][: grid.dim]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cell", *axes, "value"])
        for i, v in enumerate(values):
            writer.writerow([i, *(_fmt(c) for c in grid.centers[i]), _fmt(v)])


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def summarize(trajectory, scenario) -> dict:
    """Summary record: decay fit, conservation drift, bound monitors, residuals."""
    Q = trajectory.column("charge")
    e_rel = trajectory.column("relative_entropy")
    last = trajectory.samples[-1]
    fit = trajectory.fit
    increments = np.diff(e_rel)
    return {
        "rate": None if fit is None else fit.rate,
        "r2": None if fit is None else fit.r_squared,
        "fit_window": None if fit is None else list(fit.window),
        "fit_error": trajectory.fit_error,
        "drift": float(np.max(np.abs(Q - Q[0]))),
        "charge": float(Q[0]),
        "doping_shift": scenario.doping_shift,
        "eps": scenario.params.eps,
        "n_samples": len(trajectory),
        "t_end": last.t,
        "E_rel_initial": float(e_rel[0]),
        "E_rel_final": float(e_rel[-1]),
        "E_rel_max": float(np.max(e_rel)),
        "E_rel_max_increase": float(np.max(increments)) if increments.size else 0.0,
        "P_min": float(np.min(trajectory.column("production"))),
        "final_norms": {
            k: getattr(last, k)
            for k in ("l1_n", "l1_p", "linf_n", "linf_p", "linf_ntr", "h1_psi", "h2proxy_psi")
        },
        "bounds": {
            "min_n": float(np.min(trajectory.column("min_n"))),
            "min_p": float(np.min(trajectory.column("min_p"))),
            "min_ntr": float(np.min(trajectory.column("min_ntr"))),
            "max_ntr": float(np.max(trajectory.column("max_ntr"))),
            "max_n": float(np.max(scenario.initial.n)),
            "max_p": float(np.max(scenario.initial.p)),
        },
        "residuals": scenario.equilibrium.residuals,
        "n_star": scenario.equilibrium.n_star,
        "p_star": scenario.equilibrium.p_star,
    }


def simulate(config: ScenarioConfig):
    scenario = materialize(config)
    trajectory = run(
        scenario.initial, config.stepper, scenario.grid, scenario.fields, scenario.params,
        scenario.equilibrium, op=scenario.op, window_fraction=config.sweep["window_fraction"],
    )
    return scenario, trajectory


def cmd_run(config: ScenarioConfig, out_dir: str) -> int:
    scenario, trajectory = simulate(config)
    os.makedirs(out_dir, exist_ok=True)
    write_trajectory_csv(os.path.join(out_dir, config.outputs["trajectory"]), trajectory)
    summary = summarize(trajectory, scenario)
    _write_json(os.path.join(out_dir, config.outputs["summary"]), summary)
    log.info("rate=%s r2=%s drift=%.3e", summary["rate"], summary["r2"], summary["drift"])
    return EXIT_OK


def cmd_equilibrium(config: ScenarioConfig, out_dir: str) -> int:
    scenario = materialize(config)
    eq, grid = scenario.equilibrium, scenario.grid
    os.makedirs(out_dir, exist_ok=True)
    files = {}
    for name in ("psi_inf", "n_inf", "p_inf", "ntr_inf"):
        fname = f"{name}.csv"
        write_field_csv(os.path.join(out_dir, fname), grid, getattr(eq, name))
        files[name] = fname
    payload = {
        "n_star": eq.n_star,
        "p_star": eq.p_star,
        "eps": scenario.params.eps,
        "doping_shift": scenario.doping_shift,
        "residuals": eq.residuals,
        "newton_history": list(eq.newton_history),
        "max_abs_psi": float(np.max(np.abs(eq.psi_inf))),
        "fields": files,
    }
    _write_json(os.path.join(out_dir, config.outputs["equilibrium"]), payload)
    log.info("n_star=%r p_star=%r", eq.n_star, eq.p_star)
    return EXIT_OK


def _sweep_case(config: ScenarioConfig):
    scenario, trajectory = simulate(config)
    return trajectory, summarize(trajectory, scenario)


def sweep_eps(config: ScenarioConfig, eps_list, jobs: int = 1):
    """Run one scenario per trap lifetime; returns ``(table, per-case results)``."""
    if not eps_list:
        raise ValidationError("eps list is empty")
    configs = [config.with_eps(float(e)) for e in eps_list]
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(configs))) as pool:
            results = list(pool.map(_sweep_case, configs))
    else:
        results = [_sweep_case(c) for c in configs]
    rates = [r[1]["rate"] for r in results]
    valid = [r for r in rates if r is not None and r > 0]
    ratio = max(valid) / min(valid) if len(valid) == len(rates) else float("inf")
    table = {
        "eps": [float(e) for e in eps_list],
        "rate": rates,
        "r2": [r[1]["r2"] for r in results],
        "min_rate": min(valid) if valid else None,
        "max_rate": max(valid) if valid else None,
        "ratio": ratio,
        "max_ratio": config.sweep["max_ratio"],
        "uniform": bool(ratio <= config.sweep["max_ratio"]),
    }
    return table, results


def cmd_sweep_eps(config: ScenarioConfig, eps_list, out_dir: str, jobs: int = 1) -> int:
    table, results = sweep_eps(config, eps_list, jobs)
    os.makedirs(out_dir, exist_ok=True)
    for i, (trajectory, summary) in enumerate(results):
        case_dir = os.path.join(out_dir, f"eps_{i:02d}")
        os.makedirs(case_dir, exist_ok=True)
        write_trajectory_csv(os.path.join(case_dir, config.outputs["trajectory"]), trajectory)
        _write_json(os.path.join(case_dir, config.outputs["summary"]), summary)
    with open(os.path.join(out_dir, "sweep.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["eps", "rate", "r2"])
        for e, r, q in zip(table["eps"], table["rate"], table["r2"]):
            writer.writerow([_fmt(e), "" if r is None else _fmt(r), "" if q is None else _fmt(q)])
    _write_json(os.path.join(out_dir, "sweep.json"), table)
    if not table["uniform"]:
        log.warning("rate ratio %.3f exceeds bound %.3f", table["ratio"], table["max_ratio"])
    return EXIT_OK


def cmd_verify(seed: int, samples: int, out_dir: str | None = None, flip: bool = False) -> int:
    report = run_verify(seed, samples, flip=flip)
    for name, suite in report.items():
        if name == "passed":
            continue
        detail = ", ".join(f"{k}={v}" for k, v in suite.items() if k != "passed")
        log.info("%-20s %s  %s", name, "PASS" if suite["passed"] else "FAIL", detail)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_json(os.path.join(out_dir, "verify.json"), report)
    return EXIT_OK if report["passed"] else EXIT_PROPERTY


def _parse_eps_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help="directory for output files")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="suppress progress output")

    parser = argparse.ArgumentParser(prog="trapflow", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="integrate a scenario and write trajectory + summary")
    p.add_argument("config")
    p = sub.add_parser("equilibrium", parents=[common], help="compute the equilibrium of a scenario")
    p.add_argument("config")
    p = sub.add_parser("sweep-eps", parents=[common], help="repeat a run for several trap lifetimes")
    p.add_argument("config")
    p.add_argument("--eps", type=_parse_eps_list, required=True, help="e.g. 1e-3,1e-2,1e-1")
    p.add_argument("--jobs", type=int, default=1, help="number of worker processes")
    p = sub.add_parser("verify", parents=[common], help="run the randomised property suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--flip", action="store_true", help="reverse the inequalities (harness self-test)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = getattr(args, "out_dir", ".")
    quiet = getattr(args, "quiet", False)
    logging.basicConfig(level=logging.WARNING if quiet else logging.INFO, format="%(message)s", force=True)
    try:
        if args.command == "verify":
            return cmd_verify(args.seed, args.samples, out_dir, flip=args.flip)
        config = load_config(args.config)
        if args.command == "run":
            return cmd_run(config, out_dir)
        if args.command == "equilibrium":
            return cmd_equilibrium(config, out_dir)
        return cmd_sweep_eps(config, args.eps, out_dir, jobs=args.jobs)
    except (SchemaError, ValidationError, ChargeNeutralityViolation, CompatibilityViolation, OSError) as exc:
        log.error("error: %s", exc)
        return EXIT_VALIDATION
    except TrapflowError as exc:
        log.error("solver failure: %s", exc)
        history = getattr(exc, "history", None)
        if history:
            log.error("residual trace: %s", " ".join(f"{r:.3e}" for r in history))
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
