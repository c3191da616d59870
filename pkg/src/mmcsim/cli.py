"""Command-line entry point.

Subcommands
-----------
run      closed-loop simulation; writes trace CSV, metrics and harmonic table
analyze  steady-state harmonic table for one operating point
verify   open-loop main integrator against the refined oracle
sweep    several scenario files in parallel

Exit codes: 0 success, 1 configuration error, 2 diverged simulation,
3 infeasible operating point, 4 verification threshold breached.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harmonic
from .analysis import METRIC_FIELDS, comparison_table, format_report, metric_report
from .config import (RunConfig, default_run_config, load_run_config, parse_references,
                     with_overrides)
from .controller import AdaptiveController
from .exceptions import (ConfigurationError, DivergedSimulationError,
                         InfeasibleOperatingPointError, MMCError)
from .harmonic import HarmonicSpec
from .params import TABLE1_INITIAL_VOLTAGE, FullState, table1_params
from .simulation import run_closed_loop, run_open_loop, run_oracle, seeded_gate_sequence

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_INFEASIBLE = 3
EXIT_VERIFY = 4

VERIFY_THRESHOLDS = {"capacitor voltage": 15e-3, "arm current": 20e-3, "arm voltage": 40e-3}

log = logging.getLogger("mmcsim")


def _config(args) -> RunConfig:
    config = load_run_config(args.scenario) if args.scenario else default_run_config()
    refs = parse_references(args.reference) if getattr(args, "reference", None) else None
    return with_overrides(config, duration=getattr(args, "duration", None),
                          references=refs, seed=getattr(args, "seed", None))


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {out}: {exc}") from None
    return out


# -- harmonic table -------------------------------------------------------------

def harmonic_table(params, IaM: float, VdM: float = 0.0, Vd0: float | None = None,
                   alphaVd: float | None = None) -> tuple[str, harmonic.HarmonicAnalysis]:
    """Formatted analysis for one point; ``alphaVd=None`` selects ``-gamma``."""
    f = harmonic.feedforward_f(params, IaM)
    gamma = harmonic.P20_closed_form(params, HarmonicSpec.from_params(params, IaM), f).gamma
    phase = -gamma if alphaVd is None else alphaVd
    probe = HarmonicSpec.from_params(params, IaM, VdM=VdM, alphaVd=phase)
    boundary = harmonic.C0_and_Vd0minus(params, probe, f)
    offset = boundary.Vd0minus if Vd0 is None else Vd0
    result = harmonic.analyze(params, replace(probe, Vd0=offset))
    lines = [f"IaM = {IaM:g} A, VdM = {VdM:g} V, Vd0 = {offset:.9g} V, "
             f"alphaVd = {phase:.9g} rad" + (" (-gamma)" if alphaVd is None else "")]
    for name, value, unit in result.rows():
        lines.append(f"  {name:<9} {value + 0.0:16.9g}  {unit}")
    if alphaVd is None:
        lines.append(f"  P20 at alphaVd = -gamma: -VdM*sqrt(a^2+b^2)/2 = "
                     f"{-0.5 * VdM * math.hypot(result.a, result.b) + 0.0:.9g} W")
    return "\n".join(lines), result


# -- run ------------------------------------------------------------------------

def _run_one(config: RunConfig, mode, out: Path, tag: str):
    scenario = replace(config.scenario, reference=mode)
    trace = run_closed_loop(scenario)
    trace.to_csv(out / f"trace{tag}.csv")
    end = trace.t[-1] + trace.Ts
    reports = [metric_report(trace, w, scenario.params.omega)
               for w in config.windows if w[1] <= end + 1e-12]
    return trace, reports


def cmd_run(args) -> int:
    config = _config(args)
    out = _out_dir(args.out)
    modes = config.references
    by_mode = {}
    text = [f"scenario: {config.source}",
            f"duration: {config.scenario.duration:g} s, n = {config.scenario.params.n}"]
    for mode in modes:
        tag = "" if len(modes) == 1 else f"_{mode.kind}"
        trace, reports = _run_one(config, mode, out, tag)
        print(f"{mode}: {len(trace)} samples -> {out / f'trace{tag}.csv'}")
        by_mode[mode.kind] = reports
        if not reports:
            text.append(f"reference: {mode}: no metric window lies inside the run")
            continue
        text.append(format_report(reports, title=f"reference: {mode} "
                                                 f"(Vc12des at end {trace.Vc12des[-1]:.4f} V)"))
    if len(modes) > 1 and all(by_mode.values()):
        text.append(comparison_table(by_mode))
    (out / "metrics.txt").write_text("\n\n".join(text) + "\n")
    with (out / "metrics.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("mode",) + METRIC_FIELDS)
        for kind, reports in by_mode.items():
            for r in reports:
                row = r.row()
                w.writerow([kind] + [repr(float(row[k])) for k in METRIC_FIELDS])
    p = config.scenario.params
    tables = [harmonic_table(p, a)[0] for a in sorted({a for _, a in config.scenario.schedule.steps})]
    ctrl = AdaptiveController(p, config.scenario.gains, config.scenario.schedule)
    tables.append("optimal Vc12des (Vd~ = 0): " + ", ".join(
        f"IaM={a:g} A -> {ctrl.reference_for_amplitude(a):.6g} V"
        for _, a in config.scenario.schedule.steps))
    (out / "harmonic_table.txt").write_text("\n\n".join(tables) + "\n")
    print((out / "metrics.txt").read_text())
    return EXIT_OK


# -- analyze --------------------------------------------------------------------

def cmd_analyze(args) -> int:
    config = _config(args)
    params = config.scenario.params
    if args.VaM is not None:
        params = params.with_(VaM=args.VaM)
    alphaVd = None if args.optimal_phase else args.alphaVd
    text, _ = harmonic_table(params, args.IaM, args.VdM, args.Vd0, alphaVd)
    print(text)
    if args.out:
        (_out_dir(args.out) / "harmonic_table.txt").write_text(text + "\n")
    return EXIT_OK


# -- verify ---------------------------------------------------------------------

def verification_errors(main, oracle) -> dict[str, float]:
    return {
        "capacitor voltage": float(np.max(np.abs(main.vc - oracle.vc))),
        "arm current": float(np.max(np.abs(main.currents - oracle.currents))),
        "arm voltage": float(max(np.max(np.abs(main.V1 - oracle.V1)),
                                 np.max(np.abs(main.V2 - oracle.V2)))),
    }


def cmd_verify(args) -> int:
    if args.scenario:
        cfg = load_run_config(args.scenario)
        params = cfg.scenario.params
        initial = cfg.scenario.initial
    else:
        params = table1_params()
        initial = None
    initial = initial or FullState.uniform(params.n, TABLE1_INITIAL_VOLTAGE)
    duration = 0.5 if args.duration is None else args.duration
    seed = 0 if args.seed is None else args.seed
    gates = seeded_gate_sequence(params, duration, seed=seed, initial=initial)
    main = run_open_loop(params, gates, duration, initial)
    oracle = run_oracle(params, gates, duration, refinement=args.refinement, initial=initial)
    errors = verification_errors(main, oracle)
    worst, worst_ratio = None, 0.0
    for name, value in errors.items():
        limit = VERIFY_THRESHOLDS[name]
        ratio = value / limit
        unit = "mV" if "voltage" in name else "mA"
        print(f"max |diff| {name:<18} {1e3 * value:12.6g} {unit}  "
              f"(threshold {1e3 * limit:g} {unit})  {'ok' if value < limit else 'BREACH'}")
        if ratio > worst_ratio:
            worst, worst_ratio = name, ratio
    if args.out:
        out = _out_dir(args.out)
        main.to_csv(out / "trace_main.csv")
        oracle.to_csv(out / "trace_oracle.csv")
    if worst_ratio >= 1.0:
        print(f"verification failed; worst signal: {worst}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


# -- sweep ----------------------------------------------------------------------

def _sweep_job(job) -> tuple[str, int, str]:
    scenario_path, out, reference, duration = job
    ns = argparse.Namespace(scenario=scenario_path, out=out, reference=reference,
                            duration=duration, seed=None)
    try:
        return scenario_path, _guarded(cmd_run, ns), ""
    except Exception as exc:  # worker must report, not crash the pool
        return scenario_path, EXIT_CONFIG, str(exc)


def cmd_sweep(args) -> int:
    out = _out_dir(args.out)
    for s in args.scenarios:
        if not Path(s).is_file():
            raise ConfigurationError(f"scenario file not found: {s}")
    jobs = [(s, str(out / Path(s).stem), args.reference, args.duration) for s in args.scenarios]
    worst = EXIT_OK
    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        for path, code, msg in pool.map(_sweep_job, jobs):
            print(f"{path}: exit {code}" + (f" ({msg})" if msg else ""))
            worst = max(worst, code)
    return worst


# -- dispatch -------------------------------------------------------------------

def _guarded(func, args) -> int:
    try:
        return func(args)
    except DivergedSimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except InfeasibleOperatingPointError as exc:
        print(f"error: infeasible operating point: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigurationError, MMCError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmcsim", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--scenario", help="scenario INI file (defaults built in)")
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--duration", type=float, help="simulated time in s")
        p.add_argument("--seed", type=int, help="seed for generated gate sequences")

    p = sub.add_parser("run", help="closed-loop simulation")
    common(p, out_required=True)
    p.add_argument("--reference", help="optimal | constant | constant:VALUE | both")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="harmonic analysis table")
    common(p)
    p.add_argument("--IaM", type=float, default=1.5, help="load-current amplitude in A")
    p.add_argument("--VdM", type=float, default=0.0, help="circulating voltage amplitude in V")
    p.add_argument("--Vd0", type=float, help="circulating voltage offset in V (default Vd0-)")
    p.add_argument("--VaM", type=float, help="override the load-source amplitude in V")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--alphaVd", type=float, default=0.0, help="phase of Vd in rad")
    group.add_argument("--optimal-phase", action="store_true",
                       help="use alphaVd = -gamma and print the simplified P20")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("verify", help="open-loop model against the refined oracle")
    common(p)
    p.add_argument("--refinement", type=int, default=100, help="oracle step divisor")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="run several scenario files in parallel")
    p.add_argument("scenarios", nargs="+", help="scenario INI files")
    p.add_argument("--out", required=True, help="output directory (one subfolder per file)")
    p.add_argument("--reference", help="optimal | constant | constant:VALUE | both")
    p.add_argument("--duration", type=float, help="simulated time in s")
    p.add_argument("--workers", type=int, help="worker processes")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    return _guarded(args.func, args)


if __name__ == "__main__":
    sys.exit(main())
