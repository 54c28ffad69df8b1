"""Command-line driver: ``pfid {simulate,reproduce,check,bench}``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error,
3 modelling assumption violated.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import presets
from .config import CliConfig, load_config, resolve_output_dir, with_overrides
from .errors import AssumptionError, ConfigError, InfeasibleRateError, PfidError
from .estimators import suggest_alpha_for_rate
from .harness import (
    McSummary,
    kmse_spread,
    monte_carlo,
    rate_fit,
    run_trajectory,
    step_cost_scaling,
    timing_benchmark,
    write_timing_csv,
)
from .system import check_persistent_excitation

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_ASSUMPTION = 0, 1, 2, 3

TIMING_CAP = 200_000
TIMING_THRESHOLD = 1e-4
TIMING_REPEATS = 3

ASSUMPTION_NAMES = {
    "parameter-bound": "parameter bound (||theta|| <= theta_bar)",
    "input-bound": "input bound (||phi_k|| <= phi_bar)",
    "persistent-excitation": "persistent excitation",
    "step-size": "step-size feasibility for the O(1/k) rate",
}


def _say(*parts) -> None:
    print(*parts, flush=True)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _emit_summary(summary: McSummary, out: Path, stem: str, runs_stem: str | None = None) -> None:
    summary.to_csv(out / f"{stem}.csv")
    summary.write_jsonl(out / f"{runs_stem or 'runs_' + stem}.jsonl")
    if summary.partial:
        _say(f"warning: {len(summary.failed_runs)} run(s) diverged and were excluded: {summary.failed_runs[:10]}")


def cmd_simulate(cfg: CliConfig) -> int:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    spec = cfg.spec
    _say(f"simulating {spec.estimator.kind}: runs={spec.runs} horizon={spec.horizon} seed={spec.base_seed}")
    summary = monte_carlo(spec, workers=cfg.workers)
    _emit_summary(summary, out, "results", "runs")
    _say(f"final mse {summary.mse[-1]:.6g} (cr trace {summary.cr_trace[-1]:.6g}); wrote {out / 'results.csv'}")
    return EXIT_OK


def _prefix_inputs(spec, window: int):
    length = min(spec.horizon, max(20 * window, 1000))
    if spec.inputs.mode == "explicit":
        length = min(length, spec.inputs.vectors.shape[0])
    return replace(spec, horizon=max(length, window)).input_sequence()


def cmd_check(config_path: str) -> int:
    """Validate the modelling assumptions behind a config and print a report."""
    try:
        cfg = load_config(config_path)
    except AssumptionError as exc:
        _say(f"FAIL {ASSUMPTION_NAMES.get(exc.assumption, exc.assumption)}: {exc}")
        return EXIT_ASSUMPTION
    spec = cfg.spec
    system = spec.system
    norm = math.sqrt(float(system.theta @ system.theta))
    _say(f"PASS {ASSUMPTION_NAMES['parameter-bound']}: ||theta|| = {norm:.6g} <= {system.theta_bar:.6g}")
    _say(f"PASS {ASSUMPTION_NAMES['input-bound']}: phi_bar = {system.phi_bar:.6g}")

    window = spec.excitation_window()
    try:
        prefix = _prefix_inputs(spec, window)
        delta_sq = check_persistent_excitation(prefix, window)
    except ValueError as exc:
        _say(f"FAIL {ASSUMPTION_NAMES['persistent-excitation']}: {exc}")
        return EXIT_ASSUMPTION
    if delta_sq <= 0:
        _say(f"FAIL {ASSUMPTION_NAMES['persistent-excitation']}: window {window}, delta^2 = 0 "
             f"(regressors do not span R^{system.n})")
        return EXIT_ASSUMPTION
    _say(f"PASS {ASSUMPTION_NAMES['persistent-excitation']}: window {window}, delta^2 = {delta_sq:.6f}")

    beta = spec.estimator.beta
    try:
        alpha = suggest_alpha_for_rate(system, spec.noise, delta_sq, beta)
    except InfeasibleRateError as exc:
        _say(f"FAIL {ASSUMPTION_NAMES['step-size']}: {exc}")
        return EXIT_ASSUMPTION
    _say(f"PASS {ASSUMPTION_NAMES['step-size']}: suggested alpha = {alpha:.6g} for beta = {beta:.6g}")
    _say("all checks passed")
    return EXIT_OK


def _timing_specs(base_seed: int):
    return [
        presets.example1_spec(kind, runs=100, horizon=TIMING_CAP, base_seed=base_seed)
        for kind in ("impf", "rpfi", "projection_baseline")
    ]


def cmd_reproduce(example: int, out: Path, workers: int, seed: int, runs: int | None, horizon: int | None) -> int:
    out.mkdir(parents=True, exist_ok=True)
    meta = {"example": example, "base_seed": seed, "workers_do_not_affect_results": True,
            "pinned": {k: {"value": v, "source": src} for k, (v, src) in presets.provenance(example).items()}}

    if example == 1:
        spec = presets.example1_spec("rpfi", runs or 300, horizon or 100_000, seed)
        traj = run_trajectory(replace(spec, runs=1), 0, keep_estimates=True)
        traj.to_csv(out / "trajectory.csv")
        summary = monte_carlo(spec, workers)
        _emit_summary(summary, out, "mse_rpfi")
        lo, hi = 1_000, spec.horizon
        if hi > lo:
            try:
                meta["rate_slope"] = rate_fit(summary, lo, hi)
                meta["kmse_spread"] = kmse_spread(summary, lo, hi)
            except PfidError as exc:
                meta["rate_slope"] = f"unavailable: {exc}"
        _say(f"example 1: final mse {summary.mse[-1]:.4g}, slope {meta.get('rate_slope')}")
    elif example == 2:
        for kind in ("impf", "rpfi", "projection_baseline"):
            spec = presets.example2_spec(kind, runs or 2000, horizon or 10_000, seed)
            summary = monte_carlo(spec, workers)
            _emit_summary(summary, out, f"efficiency_{kind}")
            meta[f"final_efficiency_ratio_{kind}"] = float(summary.efficiency_ratio[-1])
            _say(f"example 2 {kind}: efficiency ratio at k={summary.ks[-1]}: {summary.efficiency_ratio[-1]:.4f}")
    elif example == 3:
        spec = presets.example3_spec(runs or 500, horizon or 20_000, seed)
        summary = monte_carlo(spec, workers)
        _emit_summary(summary, out, "variance_vs_cr")
        rows = timing_benchmark(_timing_specs(seed), TIMING_THRESHOLD, TIMING_REPEATS, pilot_runs=100, workers=workers)
        write_timing_csv(rows, out / "timing.csv", TIMING_REPEATS)
        meta["steps_to_threshold"] = {r.estimator: r.steps_to_threshold for r in rows}
        for r in rows:
            avg = f"{r.average:.4f}s" if r.finished else "did not finish"
            _say(f"example 3 timing {r.estimator}: {avg} ({r.steps_to_threshold} steps)")
    else:
        raise ConfigError(f"no built-in example {example}")
    _write_json(out / "metadata.json", meta)
    _say(f"wrote results to {out}")
    return EXIT_OK


def cmd_bench(out: Path, cfg: CliConfig | None) -> int:
    out.mkdir(parents=True, exist_ok=True)
    res = step_cost_scaling()
    with (out / "scaling.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "rpfi_seconds_per_step", "impf_seconds_per_step"])
        for n, a, b in zip(res["n"], res["rpfi"], res["impf"]):
            w.writerow([n, f"{a:.3e}", f"{b:.3e}"])
    _say(f"per-step cost exponents: rpfi {res['rpfi_exponent']:.2f}, impf {res['impf_exponent']:.2f}")
    if cfg is not None:
        rows = timing_benchmark([cfg.spec], TIMING_THRESHOLD, TIMING_REPEATS, workers=cfg.workers)
        write_timing_csv(rows, out / "timing.csv", TIMING_REPEATS)
        for r in rows:
            _say(f"{r.estimator}: average {r.average:.4f}s over {TIMING_REPEATS} repeats" if r.finished
                 else f"{r.estimator}: did not reach mse {TIMING_THRESHOLD} within {cfg.spec.horizon} steps")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment INI file")
    common.add_argument("--out", help="output directory (overrides the config and PFID_OUTPUT_DIR)")
    common.add_argument("--workers", type=int, help="worker processes for Monte-Carlo runs")
    common.add_argument("--seed", type=int, help="base seed")
    common.add_argument("--runs", type=int, help="number of Monte-Carlo runs")
    common.add_argument("--horizon", type=int, help="number of steps per run")

    parser = argparse.ArgumentParser(prog="pfid", description="Identify FIR systems from binary threshold observations.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run the Monte-Carlo experiment described by --config")
    rep = sub.add_parser("reproduce", parents=[common], help="run a built-in example")
    rep.add_argument("example", type=int, choices=(1, 2, 3))
    sub.add_parser("check", parents=[common], help="validate the modelling assumptions of --config")
    sub.add_parser("bench", parents=[common], help="per-step cost scaling (plus timing for --config)")
    return parser


def _positive(name: str, value) -> None:
    if value is not None and value < 1:
        raise ConfigError(f"--{name} must be >= 1")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        for name in ("workers", "runs", "horizon"):
            _positive(name, getattr(args, name))
        if args.command in ("simulate", "check") and not args.config:
            raise ConfigError(f"{args.command} needs --config")
        if args.command == "check":
            return cmd_check(args.config)
        if args.command == "simulate":
            cfg = with_overrides(load_config(args.config, args.out), args.runs, args.horizon, args.seed, args.workers)
            return cmd_simulate(cfg)
        if args.command == "reproduce":
            out = resolve_output_dir(args.out, f"example{args.example}")
            return cmd_reproduce(args.example, out, args.workers or 1, args.seed or 0, args.runs, args.horizon)
        cfg = None
        if args.config:
            cfg = with_overrides(load_config(args.config, args.out), args.runs, args.horizon, args.seed, args.workers)
        return cmd_bench(cfg.output_dir if cfg else resolve_output_dir(args.out, "bench"), cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionError as exc:
        print(f"assumption violated: {ASSUMPTION_NAMES.get(exc.assumption, exc.assumption)}: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (PfidError, ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
