"""Campaign execution: discrete-event simulation and the command runner.

``execute`` walks a plan phase by phase.  In simulated mode an event queue
keyed by (timestamp, device order) advances a virtual clock, so a five hour
campaign replays in milliseconds.  In wall mode every device of a phase gets
its own worker thread, and the trace is rebuilt in a deterministic order
afterwards.  ``run_pipeline`` executes a job set over the stage DAG and hands
FPGA stages to a campaign callback.
"""

from __future__ import annotations

import heapq
import logging
import os
import random
import shlex
import subprocess
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import yaml

from fleetreg.errors import (
    ConfigError,
    DeviceUnavailableError,
    FleetregError,
    RunnerCrash,
    UnknownDeviceError,
)
from fleetreg.fleet import DeviceId, Fail, Fleet, Free, JobDone, ProgramDone, Ready, StartJob, StartProgram
from fleetreg.manifest import StageSpec, load_yaml
from fleetreg.scheduler import SchedulePlan, Shard
from fleetreg.units import ds_scalar, seconds_to_ds

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_FACTOR = 5.0
EVENT_KINDS = ("program_start", "program_done", "shard_start", "shard_done", "shard_failed")


# ---------------------------------------------------------------------------
# Trace
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceEvent:
    t: int  # deciseconds
    device: DeviceId
    kind: str
    suite: str = ""
    lo: int = 0
    hi: int = 0
    copy: int = 0
    failed: tuple[int, ...] = ()
    reason: str = ""

    @property
    def shard_key(self) -> tuple:
        return (self.suite, self.lo, self.hi, self.copy)


@dataclass(frozen=True)
class SkippedShard:
    device: DeviceId
    shard: Shard


@dataclass
class ExecutionTrace:
    events: list[TraceEvent] = field(default_factory=list)
    skipped: list[SkippedShard] = field(default_factory=list)
    campaign_wall_time: int = 0

    def shard_events(self):
        return [e for e in self.events if e.kind.startswith("shard_")]


def trace_to_data(trace: ExecutionTrace) -> dict:
    events = []
    for e in trace.events:
        row = {"t": ds_scalar(e.t), "device": str(e.device), "event": e.kind}
        if e.kind.startswith("shard_"):
            row.update(suite=e.suite, lo=e.lo, hi=e.hi, copy=e.copy)
            if e.kind != "shard_start":
                row["failed"] = list(e.failed)
            if e.reason:
                row["reason"] = e.reason
        events.append(row)
    skipped = [
        {"device": str(s.device), "suite": s.shard.suite, "lo": s.shard.lo, "hi": s.shard.hi,
         "copy": s.shard.copy, "est_duration": ds_scalar(s.shard.est_duration)}
        for s in trace.skipped
    ]
    return {
        "campaign_wall_time": ds_scalar(trace.campaign_wall_time),
        "events": events,
        "skipped": skipped,
    }


def emit_trace(trace: ExecutionTrace) -> str:
    return yaml.safe_dump(trace_to_data(trace), sort_keys=False, default_flow_style=None, width=120)


def trace_from_data(data) -> ExecutionTrace:
    try:
        events = [
            TraceEvent(
                t=seconds_to_ds(r["t"]),
                device=DeviceId.parse(r["device"]),
                kind=r["event"],
                suite=r.get("suite", ""),
                lo=int(r.get("lo", 0)),
                hi=int(r.get("hi", 0)),
                copy=int(r.get("copy", 0)),
                failed=tuple(int(x) for x in r.get("failed", ())),
                reason=r.get("reason", ""),
            )
            for r in data["events"]
        ]
        skipped = [
            SkippedShard(DeviceId.parse(r["device"]),
                         Shard(r["suite"], int(r["lo"]), int(r["hi"]),
                               seconds_to_ds(r.get("est_duration", 0)), int(r.get("copy", 0))))
            for r in data.get("skipped") or ()
        ]
        return ExecutionTrace(events, skipped, seconds_to_ds(data["campaign_wall_time"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed trace document: {exc!r}") from exc


def parse_trace(text: str) -> ExecutionTrace:
    return trace_from_data(load_yaml(text))


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShardOutcome:
    failed: tuple[int, ...]  # absolute test indices
    duration: int  # deciseconds
    timed_out: bool = False


class SimulatedRunner:
    """Seeded stand-in for a real device.

    Each test fails independently with probability ``fail_rate``; the random
    stream is derived from (seed, suite, copy, lo) so outcomes do not depend
    on execution order.  ``fail_tests`` forces specific failures,
    ``crash_shards`` names shard keys whose execution crashes the device, and
    ``slowdown`` stretches a suite's durations (to exercise timeouts).
    """

    def __init__(self, seed: int = 0, fail_rate: float = 0.0, fail_tests=None,
                 crash_shards=(), slowdown=None, fail_jobs=()):
        if not 0.0 <= fail_rate <= 1.0:
            raise ValueError(f"fail_rate {fail_rate} not in [0, 1]")
        self.seed = seed
        self.fail_rate = fail_rate
        self.fail_tests = {k: set(v) for k, v in (fail_tests or {}).items()}
        self.crash_shards = set(crash_shards)
        self.slowdown = dict(slowdown or {})
        self.fail_jobs = set(fail_jobs)

    def run_shard(self, shard: Shard, device: DeviceId) -> ShardOutcome:
        if shard.key in self.crash_shards:
            raise RunnerCrash(f"device {device} crashed running {shard.key}")
        rng = random.Random(f"{self.seed}/{shard.suite}/{shard.copy}/{shard.lo}")
        forced = self.fail_tests.get(shard.suite, ())
        failed = tuple(
            i for i in range(shard.lo, shard.hi)
            if rng.random() < self.fail_rate or i in forced
        )
        factor = self.slowdown.get(shard.suite, 1.0)
        return ShardOutcome(failed, round(shard.est_duration * factor))

    def run_stage(self, job, stage: StageSpec) -> bool:
        return str(job) not in self.fail_jobs and job.kind not in self.fail_jobs


class CommandRunner:
    """Runs one external command per shard.

    ``template`` may use ``{suite} {lo} {hi} {copy} {device} {results}``.
    Exit status 0 means every test passed.  Otherwise the command may write a
    YAML result file at ``{results}`` listing failed test indices
    (``failed_tests: [...]``, absolute indices) or a ``suites`` table with a ``failed`` count;
    without one, every test of the shard counts as failed.
    """

    def __init__(self, template: str, stage_template: str | None = None,
                 timeout_factor: float = DEFAULT_TIMEOUT_FACTOR, min_timeout: float = 1.0):
        if not template:
            raise ConfigError("command runner needs a command template")
        self.template = template
        self.stage_template = stage_template
        self.timeout_factor = timeout_factor
        self.min_timeout = min_timeout

    def _argv(self, template: str, **values) -> list[str]:
        try:
            return [tok.format(**values) for tok in shlex.split(template)]
        except (KeyError, IndexError, ValueError) as exc:
            raise ConfigError(f"bad command template {template!r}: {exc}") from exc

    def run_shard(self, shard: Shard, device: DeviceId) -> ShardOutcome:
        fd, results = tempfile.mkstemp(prefix="fleetreg-", suffix=".yaml")
        os.close(fd)
        os.unlink(results)
        argv = self._argv(self.template, suite=shard.suite, lo=shard.lo, hi=shard.hi,
                          copy=shard.copy, device=device, results=results)
        timeout = max(self.min_timeout, self.timeout_factor * shard.est_duration / 10)
        start = time.monotonic()
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
        except subprocess.TimeoutExpired:
            return ShardOutcome(tuple(range(shard.lo, shard.hi)), seconds_to_ds(round(timeout, 1)), True)
        except OSError as exc:
            raise RunnerCrash(f"cannot launch {argv[0]!r}: {exc}") from exc
        finally:
            elapsed = time.monotonic() - start
        duration = seconds_to_ds(round(elapsed, 1))
        try:
            if proc.returncode == 0:
                return ShardOutcome((), duration)
            return ShardOutcome(self._read_failures(results, shard), duration)
        finally:
            if os.path.exists(results):
                os.unlink(results)

    @staticmethod
    def _read_failures(path: str, shard: Shard) -> tuple[int, ...]:
        every = tuple(range(shard.lo, shard.hi))
        if not os.path.exists(path):
            return every
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except yaml.YAMLError:
            log.warning("unreadable result file for %s", shard.key)
            return every
        if "failed_tests" in data:
            idx = sorted({int(i) for i in data["failed_tests"]})
            return tuple(i for i in idx if shard.lo <= i < shard.hi)
        for row in data.get("suites") or ():
            if row.get("name") == shard.suite:
                n = min(int(row.get("failed", 0)) + int(row.get("skipped", 0)), shard.test_count)
                return every[:n]
        return every

    def run_stage(self, job, stage: StageSpec) -> bool:
        if not self.stage_template:
            return True
        argv = self._argv(self.stage_template, kind=job.kind, variant=job.variant, stage=stage.name)
        try:
            return subprocess.run(argv, capture_output=True).returncode == 0
        except OSError:
            return False


# ---------------------------------------------------------------------------
# Campaign execution
# ---------------------------------------------------------------------------


def _check_devices(plan: SchedulePlan, fleet: Fleet) -> list[DeviceId]:
    needs_program = []
    for d in plan.devices:
        try:
            st = fleet.state(d)
        except UnknownDeviceError:
            raise DeviceUnavailableError(f"plan device {d} is not in the fleet") from None
        if isinstance(st, Free):
            needs_program.append(d)
        elif not (isinstance(st, Ready) and st.bitstream_id == plan.bitstream_id):
            raise DeviceUnavailableError(f"device {d} is {st}")
    return needs_program


class _Recorder:
    def __init__(self, plan: SchedulePlan):
        self.rank = {d: i for i, d in enumerate(plan.devices)}
        self.events: list[TraceEvent] = []
        self.skipped: list[SkippedShard] = []

    def emit(self, event: TraceEvent):
        self.events.append(event)


def _timed_outcome(shard: Shard, outcome: ShardOutcome, timeout_factor: float) -> tuple[ShardOutcome, str]:
    if outcome.timed_out:
        return outcome, "timeout"
    limit = round(shard.est_duration * timeout_factor)
    if shard.est_duration > 0 and outcome.duration > limit:
        return ShardOutcome(tuple(range(shard.lo, shard.hi)), limit), "timeout"
    return outcome, ""


def _shard_event(t, device, kind, shard, failed=(), reason="") -> TraceEvent:
    return TraceEvent(t, device, kind, shard.suite, shard.lo, shard.hi, shard.copy, tuple(failed), reason)


def _simulate(plan, fleet, runner, timeout_factor, rec: _Recorder, needs_program) -> int:
    queue: list[tuple] = []
    seq = 0

    def push(t, device, action, payload=None):
        nonlocal seq
        heapq.heappush(queue, (t, rec.rank.get(device, -1) if device else -1, seq, action, device, payload))
        seq += 1

    crashed: set[DeviceId] = set()
    pending = {"programs": len(needs_program), "devices": 0}
    work: dict[DeviceId, list[Shard]] = {}
    phase_index = 0
    job_counter = 0

    def start_phase(t):
        nonlocal phase_index
        while phase_index < len(plan.phases):
            phase = plan.phases[phase_index]
            phase_index += 1
            work.clear()
            for device, shards in phase.slots:
                if device in crashed:
                    rec.skipped.extend(SkippedShard(device, s) for s in shards)
                else:
                    work[device] = list(shards)
            pending["devices"] = len(work)
            if work:
                for device in list(work):
                    start_next(t, device)
                return

    def start_next(t, device):
        nonlocal job_counter
        if not work[device]:
            pending["devices"] -= 1
            if pending["devices"] == 0:
                push(t, None, "phase")
            return
        shard = work[device].pop(0)
        fleet.advance_clock(t)
        job_counter += 1
        fleet.transition(device, StartJob(f"{shard.key}@{job_counter}"))
        rec.emit(_shard_event(t, device, "shard_start", shard))
        try:
            outcome = runner.run_shard(shard, device)
        except RunnerCrash as exc:
            push(t, device, "crash", (shard, str(exc)))
            return
        outcome, reason = _timed_outcome(shard, outcome, timeout_factor)
        push(t + outcome.duration, device, "finish", (shard, outcome, reason))

    for d in needs_program:
        fleet.transition(d, StartProgram(plan.bitstream_id, plan.programming_latency))
        rec.emit(TraceEvent(0, d, "program_start"))
        push(plan.programming_latency, d, "programmed")
    if not needs_program:
        push(0, None, "phase")

    last = 0
    while queue:
        t, _, _, action, device, payload = heapq.heappop(queue)
        last = max(last, t)
        fleet.advance_clock(t)
        if action == "programmed":
            fleet.transition(device, ProgramDone())
            rec.emit(TraceEvent(t, device, "program_done"))
            pending["programs"] -= 1
            if pending["programs"] == 0:
                push(t, None, "phase")
        elif action == "phase":
            start_phase(t)
        elif action == "finish":
            shard, outcome, reason = payload
            fleet.transition(device, JobDone())
            kind = "shard_failed" if outcome.failed else "shard_done"
            rec.emit(_shard_event(t, device, kind, shard, outcome.failed, reason))
            start_next(t, device)
        elif action == "crash":
            shard, reason = payload
            fleet.transition(device, Fail(reason))
            crashed.add(device)
            rec.emit(_shard_event(t, device, "shard_failed", shard, range(shard.lo, shard.hi), "crash"))
            rec.skipped.extend(SkippedShard(device, s) for s in work[device])
            work[device] = []
            start_next(t, device)
    return last


def _run_wall(plan, fleet, runner, timeout_factor, rec: _Recorder, needs_program) -> int:
    origin = time.monotonic()
    lock = threading.Lock()
    seq = [0]
    stamped: list[tuple] = []

    def now() -> int:
        return seconds_to_ds(round(time.monotonic() - origin, 1))

    def record(event: TraceEvent):
        with lock:
            stamped.append((event.t, rec.rank[event.device], seq[0], event))
            seq[0] += 1

    for d in needs_program:
        fleet.transition(d, StartProgram(plan.bitstream_id, plan.programming_latency))
        record(TraceEvent(now(), d, "program_start"))
    if needs_program and plan.programming_latency:
        time.sleep(plan.programming_latency / 10)
    for d in needs_program:
        fleet.transition(d, ProgramDone())
        record(TraceEvent(now(), d, "program_done"))

    crashed: set[DeviceId] = set()

    def device_worker(device: DeviceId, shards: tuple[Shard, ...]):
        for i, shard in enumerate(shards):
            fleet.transition(device, StartJob(shard.key))
            record(_shard_event(now(), device, "shard_start", shard))
            try:
                outcome = runner.run_shard(shard, device)
            except RunnerCrash as exc:
                fleet.transition(device, Fail(str(exc)))
                record(_shard_event(now(), device, "shard_failed", shard, range(shard.lo, shard.hi), "crash"))
                with lock:
                    crashed.add(device)
                    rec.skipped.extend(SkippedShard(device, s) for s in shards[i + 1:])
                return
            outcome, reason = _timed_outcome(shard, outcome, timeout_factor)
            fleet.transition(device, JobDone())
            kind = "shard_failed" if outcome.failed else "shard_done"
            record(_shard_event(now(), device, kind, shard, outcome.failed, reason))

    for phase in plan.phases:
        live = []
        for device, shards in phase.slots:
            if device in crashed:
                rec.skipped.extend(SkippedShard(device, s) for s in shards)
            else:
                live.append((device, shards))
        if not live:
            continue
        with ThreadPoolExecutor(max_workers=len(live)) as pool:
            for f in [pool.submit(device_worker, d, s) for d, s in live]:
                f.result()

    stamped.sort(key=lambda row: row[:3])
    rec.events.extend(row[3] for row in stamped)
    return stamped[-1][0] if stamped else 0


def execute(plan: SchedulePlan, fleet: Fleet, runner, clock: str = "simulated",
            timeout_factor: float = DEFAULT_TIMEOUT_FACTOR) -> ExecutionTrace:
    """Run ``plan`` on ``fleet`` and return the execution trace."""
    if clock not in ("simulated", "wall"):
        raise ConfigError(f"unknown clock {clock!r}")
    needs_program = _check_devices(plan, fleet)
    rec = _Recorder(plan)
    if clock == "simulated":
        wall = _simulate(plan, fleet, runner, timeout_factor, rec, needs_program)
    else:
        wall = _run_wall(plan, fleet, runner, timeout_factor, rec, needs_program)
    # a crashed-then-skipped tail leaves no later events; the last event is the end
    if rec.events:
        wall = rec.events[-1].t
    return ExecutionTrace(rec.events, rec.skipped, wall)


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StageRecord:
    job: str
    stage: str
    status: str  # passed | failed | skipped
    start: int
    duration: int
    detail: str = ""


@dataclass
class PipelineResult:
    status: str
    records: list[StageRecord] = field(default_factory=list)
    campaigns: dict = field(default_factory=dict)
    wall_time: int = 0


def run_pipeline(jobs, stages, runner, clock: str = "simulated", campaign=None) -> PipelineResult:
    """Execute a job set in stage-DAG order.

    A job runs only when every selected job of an upstream stage kind passed;
    otherwise it is skipped and the pipeline fails.  ``campaign(job)`` is
    called for ``fpga_test`` jobs and must return an object with ``verdict``
    and ``campaign_wall_time`` (a run report); without it FPGA jobs behave
    like ordinary stages.
    """
    by_kind: dict[str, StageSpec] = {}
    for st in stages:
        by_kind.setdefault(st.kind, st)
    missing = sorted({j.kind for j in jobs.jobs} - set(by_kind))
    if missing:
        raise ConfigError(f"jobs reference stage kinds with no stage: {missing}")

    upstream = upstream_kinds(stages)
    rank = topo_rank(stages)
    order = sorted(jobs.jobs, key=lambda j: (rank[j.kind], j.variant))
    status_by_kind: dict[str, list[str]] = {}
    records: list[StageRecord] = []
    campaigns = {}
    t = 0
    for job in order:
        stage = by_kind[job.kind]
        blockers = [
            k for k in upstream.get(job.kind, ())
            if any(s != "passed" for s in status_by_kind.get(k, ()))
        ]
        if blockers:
            records.append(StageRecord(str(job), stage.name, "skipped", t, 0,
                                       f"dependency failed: {', '.join(sorted(blockers))}"))
            status_by_kind.setdefault(job.kind, []).append("skipped")
            continue
        if job.kind == "fpga_test" and campaign is not None:
            try:
                report = campaign(job)
            except FleetregError as exc:
                records.append(StageRecord(str(job), stage.name, "failed", t, 0, str(exc)))
                status_by_kind.setdefault(job.kind, []).append("failed")
                continue
            campaigns[str(job)] = report
            ok = report.verdict == "pass"
            duration = report.campaign_wall_time
            detail = f"campaign verdict {report.verdict}"
        else:
            ok = runner.run_stage(job, stage)
            duration = stage.nominal_duration
            detail = ""
        status = "passed" if ok else "failed"
        records.append(StageRecord(str(job), stage.name, status, t, duration, detail))
        status_by_kind.setdefault(job.kind, []).append(status)
        t += duration
    overall = "passed" if all(r.status == "passed" for r in records) else "failed"
    return PipelineResult(overall, records, campaigns, t)


def topo_rank(stages) -> dict[str, int]:
    """Rank stage kinds by a topological order of the stage DAG (Kahn, stable)."""
    names = [st.name for st in stages]
    deps = {st.name: [d for d in st.depends_on if d in names] for st in stages}
    done: list[str] = []
    while len(done) < len(names):
        ready = [n for n in names if n not in done and all(d in done for d in deps[n])]
        if not ready:
            raise ConfigError("stage dependencies contain a cycle")
        done.append(ready[0])
    kind_of = {st.name: st.kind for st in stages}
    rank: dict[str, int] = {}
    for i, name in enumerate(done):
        rank.setdefault(kind_of[name], i)
    return rank


def upstream_kinds(stages) -> dict[str, set[str]]:
    """Stage kind -> kinds of every (transitive) dependency."""
    by_name = {st.name: st for st in stages}
    out: dict[str, set[str]] = {}
    for st in stages:
        seen: set[str] = set()
        todo = list(st.depends_on)
        while todo:
            name = todo.pop()
            if name in seen or name not in by_name:
                continue
            seen.add(name)
            todo.extend(by_name[name].depends_on)
        out.setdefault(st.kind, set()).update(by_name[n].kind for n in seen)
    return out
