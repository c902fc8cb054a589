"""``fleetreg`` command line.

Exit codes: 0 success or passing verdict, 1 failing verdict, 2 usage or
configuration error, 3 runtime error.  Every file argument accepts ``-`` for
stdin/stdout.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from dataclasses import replace

import yaml

from fleetreg import engine, reporting, scheduler, triggers
from fleetreg.errors import ConfigError, FleetregError
from fleetreg.fleet import init_fleet
from fleetreg.manifest import (
    FleetSpec,
    builtin_bzl_manifest,
    emit_manifest,
    load_yaml,
    manifest_from_data,
    validate_manifest,
)
from fleetreg.units import format_ds, parse_window_days, seconds_to_ds

log = logging.getLogger("fleetreg")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
STABILITY_VARIANTS = {"fpga-stability-extended", "fpga-8-cluster"}
HISTORY_ENV = "FLEETREG_HISTORY"


def read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc


def write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def load_manifest_arg(path: str | None):
    if path is None or path == "builtin":
        return builtin_bzl_manifest()
    return manifest_from_data(load_yaml(read_text(path)))


def load_fleet_arg(path: str | None, manifest) -> FleetSpec:
    if path is None:
        return manifest.fleet_default
    data = load_yaml(read_text(path))
    if not isinstance(data, dict):
        raise ConfigError("fleet file must be a mapping")
    if "fleet" in data and len(data) == 1:
        data = data["fleet"]
    unknown = set(data) - {"nodes", "devices_per_node", "programming_latency"}
    if unknown:
        raise ConfigError(f"fleet: unknown keys {sorted(unknown)}")
    try:
        spec = FleetSpec(int(data["nodes"]), int(data["devices_per_node"]),
                         seconds_to_ds(data.get("programming_latency", 0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"fleet: {exc!r}") from exc
    if spec.nodes < 1 or spec.devices_per_node < 1 or spec.programming_latency < 0:
        raise ConfigError(f"fleet: invalid sizes {spec}")
    return spec


def load_trigger_config_arg(path: str | None) -> triggers.TriggerConfig:
    if path is None:
        return triggers.DEFAULT_CONFIG
    return triggers.parse_trigger_config(read_text(path))


def history_path(args) -> str | None:
    return getattr(args, "history", None) or os.environ.get(HISTORY_ENV) or None


def _fleet_for(args, manifest):
    spec = load_fleet_arg(args.fleet, manifest)
    if spec != manifest.fleet_default:
        manifest = replace(manifest, fleet_default=spec)
    return manifest, init_fleet(spec)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    manifest = load_manifest_arg(args.manifest)
    # parsing already validated; re-run so builtin manifests are checked too
    violations = validate_manifest(manifest)
    if violations:
        for v in violations:
            print(f"{v.path}: {v.reason} [{v.code}]", file=sys.stderr)
        return EXIT_CONFIG
    if args.emit:
        write_text(args.out, emit_manifest(manifest))
    else:
        print(f"ok: {len(manifest.suites)} suites, {manifest.total_tests} tests, "
              f"{format_ds(manifest.sequential_total)} s sequential")
    return EXIT_OK


def cmd_plan(args) -> int:
    manifest, fleet = _fleet_for(args, load_manifest_arg(args.manifest))
    p = scheduler.plan(manifest, fleet, mode=args.campaign, n_devices=args.devices, estimation=args.mode)
    write_text(args.out, scheduler.emit_plan(p))
    return EXIT_OK


def _make_runner(args):
    if args.mode == "real":
        if not args.runner_cmd:
            raise ConfigError("--mode real needs --runner-cmd")
        return engine.CommandRunner(args.runner_cmd, timeout_factor=args.timeout_factor), "wall"
    return engine.SimulatedRunner(seed=args.seed, fail_rate=args.fail_rate), "simulated"


def _trace_path(out: str | None) -> str | None:
    if out is None or out == "-":
        return None
    root, _ = os.path.splitext(out)
    return root + ".trace.yaml"


def cmd_run(args) -> int:
    manifest, fleet = _fleet_for(args, load_manifest_arg(args.manifest))
    p = scheduler.parse_plan(read_text(args.plan))
    runner, clock = _make_runner(args)
    trace = engine.execute(p, fleet, runner, clock=clock, timeout_factor=args.timeout_factor)
    report = reporting.aggregate(trace, manifest, p, trigger=args.trigger, fleet=fleet)
    trace_out = args.trace or _trace_path(args.out)
    if trace_out:
        write_text(trace_out, engine.emit_trace(trace))
    write_text(args.out, reporting.emit_report(report))
    hist = history_path(args)
    if hist:
        reporting.append_history(hist, report)
    return EXIT_OK if report.verdict == "pass" else EXIT_FAIL


def cmd_report(args) -> int:
    manifest = load_manifest_arg(args.manifest)
    p = scheduler.parse_plan(read_text(args.plan))
    trace = engine.parse_trace(read_text(args.trace))
    report = reporting.aggregate(trace, manifest, p, trigger=args.trigger)
    write_text(args.out, reporting.emit_report(report))
    if args.csv:
        write_text(args.csv, reporting.suites_csv(report))
    return EXIT_OK if report.verdict == "pass" else EXIT_FAIL


def cmd_history(args) -> int:
    path = history_path(args)
    if not path:
        raise ConfigError(f"no history file: pass --history or set {HISTORY_ENV}")
    try:
        window = parse_window_days(args.window)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    stats = reporting.history_stats(path, window, successful_only=not args.all_runs)
    write_text(args.out, yaml.safe_dump({
        "window_days": stats.window,
        "pipeline_count": stats.pipeline_count,
        "successful_count": stats.successful_count,
        "mean_duration_longest": round(stats.mean_duration_longest, 1),
        "mean_duration_fastest": round(stats.mean_duration_fastest, 1),
    }, sort_keys=False))
    return EXIT_OK


def replay_table1(devices: int = 8, mode: str = "replay", seed: int = 0):
    """Plan and simulate the builtin campaign failure-free; returns (plan, trace, report)."""
    manifest = builtin_bzl_manifest()
    fleet = init_fleet(manifest.fleet_default)
    p = scheduler.plan(manifest, fleet, mode="normal", n_devices=devices, estimation=mode)
    trace = engine.execute(p, fleet, engine.SimulatedRunner(seed=seed, fail_rate=0.0))
    report = reporting.aggregate(trace, manifest, p, trigger="replay-table1", fleet=fleet)
    return p, trace, report


def cmd_replay_table1(args) -> int:
    _, trace, report = replay_table1(args.devices, args.mode, args.seed)
    if args.trace:
        write_text(args.trace, engine.emit_trace(trace))
    write_text(args.out, reporting.emit_report(report))
    return EXIT_OK


def end_to_end(event_text: str, manifest=None, config=None, devices: int = 8, seed: int = 0,
               fail_rate: float = 0.0, runner=None, estimation: str = "replay",
               history: str | None = None, fleet_spec: FleetSpec | None = None):
    """classify -> select -> prune -> plan/execute/report per FPGA job -> history.

    Returns ``(exit_code, kind, jobs, report)``; ``report`` is None when the
    event triggers nothing.
    """
    manifest = manifest or builtin_bzl_manifest()
    config = config or triggers.DEFAULT_CONFIG
    spec = fleet_spec or manifest.fleet_default
    event = triggers.parse_event(event_text)
    kind = triggers.classify_event(event, config)
    if kind == triggers.TriggerKind.NONE:
        return EXIT_OK, kind, triggers.JobSet(), None
    jobs = triggers.apply_disable_controls(triggers.select_jobs(kind, config), event.labels,
                                           manifest.stages, config)
    if runner is None:
        runner = engine.SimulatedRunner(seed=seed, fail_rate=fail_rate)
    clock = "wall" if isinstance(runner, engine.CommandRunner) else "simulated"

    def campaign(job):
        fleet = init_fleet(spec)
        mode = "stability" if job.variant in STABILITY_VARIANTS else "normal"
        p = scheduler.plan(manifest, fleet, mode=mode, n_devices=devices, estimation=estimation)
        trace = engine.execute(p, fleet, runner, clock=clock)
        return reporting.aggregate(trace, manifest, p, trigger=kind.value, fleet=fleet)

    result = engine.run_pipeline(jobs, manifest.stages, runner, clock=clock, campaign=campaign)
    if result.campaigns:
        first_job, report = next(iter(result.campaigns.items()))
        notes = list(report.notes) + [
            f"{job}: campaign verdict {r.verdict}, wall time {format_ds(r.campaign_wall_time)} s"
            for job, r in result.campaigns.items() if job != first_job
        ]
        report = replace(report, notes=tuple(notes), stages=tuple(result.records))
    else:
        report = reporting.RunReport(
            run_id="", trigger=kind.value, verdict="pass",
            campaign_wall_time=result.wall_time, sequential_baseline=result.wall_time,
            speedup=None, suites=(), coverage=manifest.coverage, stages=tuple(result.records),
        )
    verdict = "pass" if result.status == "passed" and all(
        r.verdict == "pass" for r in result.campaigns.values()) else "fail"
    digest = hashlib.sha256((event_text + reporting.emit_report(report)).encode()).hexdigest()[:12]
    report = replace(report, verdict=verdict, run_id=digest)
    if history:
        reporting.append_history(history, report)
    return (EXIT_OK if verdict == "pass" else EXIT_FAIL), kind, jobs, report


def cmd_trigger(args) -> int:
    config = load_trigger_config_arg(args.trigger_config)
    text = read_text(args.event)
    if not args.run:
        event = triggers.parse_event(text)
        kind = triggers.classify_event(event, config)
        doc = {"trigger": kind.value, "jobs": []}
        if kind != triggers.TriggerKind.NONE:
            manifest = load_manifest_arg(args.manifest)
            jobs = triggers.apply_disable_controls(triggers.select_jobs(kind, config), event.labels,
                                                   manifest.stages, config)
            doc["jobs"] = [str(j) for j in jobs]
            if jobs.warnings:
                doc["warnings"] = list(jobs.warnings)
        write_text(args.out, yaml.safe_dump(doc, sort_keys=False))
        return EXIT_OK
    manifest = load_manifest_arg(args.manifest)
    spec = load_fleet_arg(args.fleet, manifest)
    runner = None
    if args.mode == "real":
        runner, _ = _make_runner(args)
    code, kind, jobs, report = end_to_end(
        text, manifest, config, devices=args.devices, seed=args.seed, fail_rate=args.fail_rate,
        runner=runner, estimation=args.estimation, history=history_path(args), fleet_spec=spec,
    )
    if report is None:
        write_text(args.out, yaml.safe_dump({"trigger": kind.value, "jobs": []}, sort_keys=False))
    else:
        write_text(args.out, reporting.emit_report(report))
    return code


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} not in [0, 1]")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text} must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="manifest YAML (default: builtin campaign)")
    common.add_argument("--fleet", help="fleet YAML overriding the manifest fleet")
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    execution = argparse.ArgumentParser(add_help=False)
    execution.add_argument("--mode", choices=("sim", "real"), default="sim")
    execution.add_argument("--seed", type=int, default=0)
    execution.add_argument("--fail-rate", type=_fraction, default=0.0)
    execution.add_argument("--runner-cmd", help="command template for --mode real")
    execution.add_argument("--timeout-factor", type=float, default=engine.DEFAULT_TIMEOUT_FACTOR)
    execution.add_argument("--history", help=f"history store (default ${HISTORY_ENV})")

    parser = argparse.ArgumentParser(prog="fleetreg", description="FPGA farm regression orchestrator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="validate a manifest")
    p.add_argument("--emit", action="store_true", help="print the canonical manifest")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plan", parents=[common], help="schedule a campaign")
    p.add_argument("--devices", type=_positive, default=8)
    p.add_argument("--mode", choices=scheduler.ESTIMATION_MODES, default="model")
    p.add_argument("--campaign", choices=scheduler.CAMPAIGN_MODES, default="normal")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("trigger", parents=[common, execution], help="classify a CI event")
    p.add_argument("--event", required=True)
    p.add_argument("--trigger-config")
    p.add_argument("--run", action="store_true", help="execute the selected pipeline end to end")
    p.add_argument("--devices", type=_positive, default=8)
    p.add_argument("--estimation", choices=scheduler.ESTIMATION_MODES, default="replay")
    p.set_defaults(func=cmd_trigger)

    p = sub.add_parser("run", parents=[common, execution], help="execute a plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--trace", help="trace output (default: next to --out)")
    p.add_argument("--trigger", default="manual")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", parents=[common], help="aggregate a trace into a report")
    p.add_argument("--plan", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--trigger", default="manual")
    p.add_argument("--csv", help="also write the suites table as CSV")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("history", parents=[common], help="pipeline statistics")
    p.add_argument("--history")
    p.add_argument("--window", default="21d")
    p.add_argument("--all-runs", action="store_true", help="include failed runs in the deciles")
    p.set_defaults(func=cmd_history)

    p = sub.add_parser("replay-table1", parents=[common], help="reproduce the 1 vs 8 device campaign")
    p.add_argument("--devices", type=_positive, default=8)
    p.add_argument("--mode", choices=scheduler.ESTIMATION_MODES, default="replay")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace")
    p.set_defaults(func=cmd_replay_table1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"fleetreg: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FleetregError, OSError) as exc:
        print(f"fleetreg: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
