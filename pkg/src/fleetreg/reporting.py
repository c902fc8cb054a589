"""Run reports, failure-threshold verdicts and the run history store."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import random
import re
import tempfile
import time
from dataclasses import dataclass
from fractions import Fraction

from fleetreg.engine import ExecutionTrace, StageRecord, emit_trace
from fleetreg.errors import ConfigError, TraceMismatchError
from fleetreg.manifest import CoverageRecord, Manifest, load_yaml, yaml_float
from fleetreg.scheduler import SchedulePlan, emit_plan
from fleetreg.units import format_ds, seconds_to_ds

log = logging.getLogger(__name__)

__all__ = [
    "CoverageRecord", "SuiteResult", "RunReport", "HistoryStats",
    "verdict_for", "aggregate", "emit_report", "parse_report", "suites_csv",
    "append_history", "append_history_many", "read_history", "history_stats",
    "synthesize_history",
]


@dataclass(frozen=True)
class SuiteResult:
    suite: str
    total: int
    passed: int
    failed: int
    skipped: int
    wall_time: int  # deciseconds
    threshold: float
    verdict: str


@dataclass(frozen=True)
class RunReport:
    run_id: str
    trigger: str
    verdict: str
    campaign_wall_time: int
    sequential_baseline: int
    speedup: float | None
    suites: tuple[SuiteResult, ...]
    coverage: CoverageRecord | None = None
    fleet: tuple[tuple[str, str], ...] = ()
    notes: tuple[str, ...] = ()
    stages: tuple[StageRecord, ...] = ()

    @property
    def total_tests(self) -> int:
        return sum(s.total for s in self.suites)


def verdict_for(failed: int, skipped: int, total: int, threshold: float) -> str:
    """``pass`` iff (failed + skipped) / total <= threshold, compared exactly."""
    if total <= 0:
        return "pass"
    bound = Fraction(repr(float(threshold)))
    return "pass" if Fraction(failed + skipped, total) <= bound else "fail"


def _run_id(*parts: str) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p.encode())
        h.update(b"\0")
    return h.hexdigest()[:12]


def aggregate(trace: ExecutionTrace, manifest: Manifest, plan: SchedulePlan,
              trigger: str = "manual", run_id: str | None = None, fleet=None,
              stages=()) -> RunReport:
    """Fold a trace into per-suite results and campaign-level figures."""
    planned: dict[str, int] = {}
    for ph in plan.phases:
        planned[ph.suite] = planned.get(ph.suite, 0) + sum(
            s.test_count for _, shards in ph.slots for s in shards)
    manifest_names = {s.name for s in manifest.suites}
    for name in planned:
        if name not in manifest_names:
            raise TraceMismatchError(f"plan suite {name!r} is not in the manifest")

    passed = dict.fromkeys(planned, 0)
    failed = dict.fromkeys(planned, 0)
    start: dict[str, int] = {}
    end: dict[str, int] = {}
    for e in trace.events:
        if not e.kind.startswith("shard_"):
            continue
        if e.suite not in planned:
            raise TraceMismatchError(f"trace mentions unscheduled suite {e.suite!r}")
        if e.kind == "shard_start":
            start[e.suite] = min(start.get(e.suite, e.t), e.t)
            continue
        end[e.suite] = max(end.get(e.suite, e.t), e.t)
        n_failed = len(e.failed)
        failed[e.suite] += n_failed
        passed[e.suite] += (e.hi - e.lo) - n_failed
    for s in trace.skipped:
        if s.shard.suite not in planned:
            raise TraceMismatchError(f"trace skips unscheduled suite {s.shard.suite!r}")

    results = []
    for suite in manifest.suites:
        if suite.name not in planned:
            continue
        total = planned[suite.name]
        skipped = total - passed[suite.name] - failed[suite.name]
        if skipped < 0:
            raise TraceMismatchError(f"trace reports more tests than planned for {suite.name!r}")
        wall = end.get(suite.name, 0) - start.get(suite.name, 0) if suite.name in start else 0
        results.append(SuiteResult(
            suite=suite.name,
            total=total,
            passed=passed[suite.name],
            failed=failed[suite.name],
            skipped=skipped,
            wall_time=wall,
            threshold=suite.failure_threshold,
            verdict=verdict_for(failed[suite.name], skipped, total, suite.failure_threshold),
        ))

    notes = list(plan.notes)
    full_normal = plan.campaign_mode == "normal" and set(planned) == manifest_names
    baseline = plan.est_sequential
    if full_normal and manifest.reference_sequential_total is not None:
        baseline = manifest.reference_sequential_total
        column = manifest.sequential_total
        if baseline != column:
            notes.append(
                f"reference sequential total {format_ds(baseline)} s differs from the "
                f"per-suite sum {format_ds(column)} s ({(baseline - column) / column:+.1%})"
            )
    wall = trace.campaign_wall_time
    speed = round(baseline / wall, 1) if wall > 0 and baseline > 0 else None
    stage_ok = all(r.status == "passed" for r in stages)
    verdict = "pass" if stage_ok and all(r.verdict == "pass" for r in results) else "fail"
    if run_id is None:
        run_id = _run_id(trigger, emit_plan(plan), emit_trace(trace))
    snapshot = tuple(fleet.snapshot().items()) if fleet is not None else ()
    return RunReport(
        run_id=run_id,
        trigger=trigger,
        verdict=verdict,
        campaign_wall_time=wall,
        sequential_baseline=baseline,
        speedup=speed,
        suites=tuple(results),
        coverage=manifest.coverage,
        fleet=snapshot,
        notes=tuple(notes),
        stages=tuple(stages),
    )


# ---------------------------------------------------------------------------
# Canonical YAML
# ---------------------------------------------------------------------------

_PLAIN_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-()]*$")
_RESERVED = {"true", "false", "yes", "no", "on", "off", "null", "y", "n", "none"}


def _s(value: str) -> str:
    if _PLAIN_RE.match(value) and value.lower() not in _RESERVED:
        return value
    return json.dumps(value, ensure_ascii=False)


def emit_report(r: RunReport) -> str:
    out = [
        f"run_id: {_s(r.run_id)}",
        f"trigger: {_s(r.trigger)}",
        f"verdict: {r.verdict}",
        f"campaign_wall_time: {format_ds(r.campaign_wall_time)}",
        f"sequential_baseline: {format_ds(r.sequential_baseline)}",
        f"speedup: {'null' if r.speedup is None else yaml_float(r.speedup)}",
    ]
    if r.suites:
        out.append("suites:")
        for s in r.suites:
            out.append(
                f"  - {{name: {_s(s.suite)}, total: {s.total}, passed: {s.passed}, "
                f"failed: {s.failed}, skipped: {s.skipped}, wall_time: {format_ds(s.wall_time)}, "
                f"threshold: {yaml_float(s.threshold)}, verdict: {s.verdict}}}"
            )
    else:
        out.append("suites: []")
    if r.coverage is None:
        out.append("coverage: null")
    else:
        c = r.coverage
        out.append(f"coverage: {{statements: {yaml_float(c.statements)}, branches: {yaml_float(c.branches)}, "
                   f"toggle: {yaml_float(c.toggle)}, total: {yaml_float(c.total)}}}")
    if r.fleet:
        out.append("fleet:")
        out.extend(f"  {_s(k)}: {_s(v)}" for k, v in r.fleet)
    else:
        out.append("fleet: {}")
    if r.notes:
        out.append("notes:")
        out.extend(f"  - {_s(n)}" for n in r.notes)
    if r.stages:
        out.append("stages:")
        for st in r.stages:
            out.append(
                f"  - {{job: {_s(st.job)}, stage: {_s(st.stage)}, status: {st.status}, "
                f"start: {format_ds(st.start)}, duration: {format_ds(st.duration)}, "
                f"detail: {json.dumps(st.detail, ensure_ascii=False)}}}"
            )
    return "\n".join(out) + "\n"


_REPORT_KEYS = ("run_id", "trigger", "verdict", "campaign_wall_time", "sequential_baseline",
                "speedup", "suites", "coverage", "fleet", "notes", "stages")


def report_from_data(data) -> RunReport:
    if not isinstance(data, dict):
        raise ConfigError("report must be a mapping")
    unknown = set(data) - set(_REPORT_KEYS)
    if unknown:
        raise ConfigError(f"report: unknown keys {sorted(unknown)}")
    try:
        suites = tuple(
            SuiteResult(
                suite=str(s["name"]), total=int(s["total"]), passed=int(s["passed"]),
                failed=int(s["failed"]), skipped=int(s["skipped"]),
                wall_time=seconds_to_ds(s["wall_time"]), threshold=float(s["threshold"]),
                verdict=str(s["verdict"]),
            )
            for s in data.get("suites") or ()
        )
        cov = data.get("coverage")
        coverage = None if cov is None else CoverageRecord(
            float(cov["statements"]), float(cov["branches"]), float(cov["toggle"]), float(cov["total"]))
        stages = tuple(
            StageRecord(str(st["job"]), str(st["stage"]), str(st["status"]),
                        seconds_to_ds(st["start"]), seconds_to_ds(st["duration"]), str(st.get("detail", "")))
            for st in data.get("stages") or ()
        )
        speed = data.get("speedup")
        return RunReport(
            run_id=str(data["run_id"]),
            trigger=str(data["trigger"]),
            verdict=str(data["verdict"]),
            campaign_wall_time=seconds_to_ds(data["campaign_wall_time"]),
            sequential_baseline=seconds_to_ds(data["sequential_baseline"]),
            speedup=None if speed is None else float(speed),
            suites=suites,
            coverage=coverage,
            fleet=tuple((str(k), str(v)) for k, v in (data.get("fleet") or {}).items()),
            notes=tuple(str(n) for n in data.get("notes") or ()),
            stages=stages,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed report: {exc!r}") from exc


def parse_report(text: str) -> RunReport:
    return report_from_data(load_yaml(text))


def suites_csv(r: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "total", "passed", "failed", "skipped", "wall_time", "threshold", "verdict"])
    for s in r.suites:
        w.writerow([s.suite, s.total, s.passed, s.failed, s.skipped,
                    format_ds(s.wall_time), repr(s.threshold), s.verdict])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# History
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HistoryStats:
    pipeline_count: int
    mean_duration_longest: float  # seconds
    mean_duration_fastest: float  # seconds
    window: float  # days
    successful_count: int = 0


def history_record(r: RunReport, recorded_at: float | None = None, duration: int | None = None) -> dict:
    if duration is None:
        duration = r.campaign_wall_time
        if r.stages:
            duration = max(duration, sum(st.duration for st in r.stages))
    return {
        "run_id": r.run_id,
        "trigger": r.trigger,
        "verdict": r.verdict,
        "duration": duration / 10,
        "recorded_at": time.time() if recorded_at is None else recorded_at,
    }


def append_history_many(store, records) -> None:
    """Append records atomically: copy, extend, fsync, rename over the store."""
    store = os.fspath(store)
    directory = os.path.dirname(os.path.abspath(store))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".history-", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as out:
            if os.path.exists(store):
                with open(store, encoding="utf-8") as src:
                    existing = src.read()
                out.write(existing)
                if existing and not existing.endswith("\n"):
                    out.write("\n")
            for rec in records:
                out.write(json.dumps(rec, sort_keys=True) + "\n")
            out.flush()
            os.fsync(out.fileno())
        os.replace(tmp, store)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def append_history(store, r: RunReport, recorded_at: float | None = None) -> None:
    append_history_many(store, [history_record(r, recorded_at)])


def read_history(store) -> list[dict]:
    """All well-formed records; corrupt lines are logged and skipped."""
    if not os.path.exists(store):
        return []
    out = []
    with open(store, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict):
                    raise ValueError("not an object")
                rec["duration"] = float(rec["duration"])
                rec["recorded_at"] = float(rec["recorded_at"])
                if rec["duration"] <= 0:
                    raise ValueError("non-positive duration")
            except (ValueError, KeyError, TypeError) as exc:
                log.warning("skipping corrupt history record %s:%d (%s)", store, lineno, exc)
                continue
            out.append(rec)
    return out


def history_stats(store, window: float, now: float | None = None, successful_only: bool = True) -> HistoryStats:
    """Pipeline count and decile duration means over the last ``window`` days.

    The count covers every run in the window; the fastest/longest means are
    taken over the bottom and top ``ceil(n / 10)`` durations of the
    successful runs (all runs when ``successful_only`` is false).
    """
    records = read_history(store)
    if now is None:
        now = max((r["recorded_at"] for r in records), default=time.time())
    lo = now - window * 86400
    in_window = [r for r in records if lo <= r["recorded_at"] <= now]
    pool = [r for r in in_window if r.get("verdict") == "pass"] if successful_only else in_window
    durations = sorted(r["duration"] for r in pool)
    if not durations:
        return HistoryStats(len(in_window), 0.0, 0.0, window, 0)
    k = math.ceil(len(durations) / 10)
    return HistoryStats(
        pipeline_count=len(in_window),
        mean_duration_longest=sum(durations[-k:]) / k,
        mean_duration_fastest=sum(durations[:k]) / k,
        window=window,
        successful_count=len(durations),
    )


def _centered(rng: random.Random, n: int, mean: float, spread: float) -> list[float]:
    offsets = [rng.uniform(-spread, spread) for _ in range(n)]
    shift = sum(offsets) / n
    return [mean + o - shift for o in offsets]


def synthesize_history(count: int = 4536, window_days: float = 21.0,
                       longest_mean: float = 2.2 * 86400, fastest_mean: float = 6.4 * 60,
                       failure_rate: float = 0.1, seed: int = 0, now: float = 1_700_000_000.0) -> list[dict]:
    """Synthetic pipeline history whose decile means are exactly the targets.

    Successful runs are split into a fastest decile centred on
    ``fastest_mean`` (+-10 %), a longest decile centred on ``longest_mean``
    (+-10 %) and a middle band strictly between the two.  Failed runs get
    arbitrary durations and do not affect the decile means.
    """
    if count < 1:
        return []
    if not 1.5 * fastest_mean < 0.5 * longest_mean:
        raise ValueError("fastest and longest means are too close to separate into deciles")
    rng = random.Random(seed)
    n_fail = int(round(count * failure_rate))
    n_ok = count - n_fail
    k = math.ceil(n_ok / 10) if n_ok else 0
    durations: list[float] = []
    if n_ok:
        middle = n_ok - 2 * k
        durations += _centered(rng, k, fastest_mean, 0.1 * fastest_mean)
        durations += [rng.uniform(1.5 * fastest_mean, 0.5 * longest_mean) for _ in range(max(middle, 0))]
        if middle >= 0:
            durations += _centered(rng, k, longest_mean, 0.1 * longest_mean)
    verdicts = ["pass"] * len(durations) + ["fail"] * n_fail
    durations += [rng.uniform(60.0, longest_mean) for _ in range(n_fail)]
    order = list(range(count))
    rng.shuffle(order)
    start = now - window_days * 86400
    stamps = sorted(rng.uniform(start, now) for _ in range(count))
    return [
        {
            "run_id": f"synthetic-{i:05d}",
            "trigger": "Torture",
            "verdict": verdicts[j],
            "duration": durations[j],
            "recorded_at": stamps[i],
        }
        for i, j in enumerate(order)
    ]
