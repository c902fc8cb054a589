"""Campaign planning: sharding, LPT placement and makespan estimation.

A campaign runs as a sequence of phases, one per suite in manifest order.
Divisible suites are cut into contiguous shards and spread over the devices
with LPT; unified suites run whole on the first device; in stability
campaigns replicated suites run one whole copy per device.  A phase starts
when every device has finished the previous one, so the campaign makespan is
the programming latency plus the sum of phase makespans.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import yaml

from fleetreg.errors import ConfigError, InsufficientCapacityError, SchedulingError
from fleetreg.fleet import DeviceId, Fleet
from fleetreg.manifest import Manifest, TestSuite
from fleetreg.units import ds_scalar, prorate, seconds_to_ds

CAMPAIGN_MODES = ("normal", "stability")
ESTIMATION_MODES = ("model", "replay")
DEFAULT_BITSTREAM = "bzl"


@dataclass(frozen=True)
class Shard:
    suite: str
    lo: int
    hi: int
    est_duration: int  # deciseconds
    copy: int = 0

    @property
    def test_count(self) -> int:
        return self.hi - self.lo

    @property
    def key(self) -> str:
        base = f"{self.suite}[{self.lo}:{self.hi})"
        return f"{base}#{self.copy}" if self.copy else base


@dataclass(frozen=True)
class Phase:
    suite: str
    kind: str  # sharded | whole | replicated
    slots: tuple[tuple[DeviceId, tuple[Shard, ...]], ...]

    def load(self, device: DeviceId) -> int:
        for d, shards in self.slots:
            if d == device:
                return sum(s.est_duration for s in shards)
        return 0

    @property
    def makespan(self) -> int:
        return max((sum(s.est_duration for s in shards) for _, shards in self.slots), default=0)


@dataclass(frozen=True)
class Assignment:
    phases: tuple[Phase, ...]
    mode: str = "model"  # estimation mode: model | replay

    @property
    def per_device(self) -> dict[DeviceId, list[Shard]]:
        out: dict[DeviceId, list[Shard]] = {}
        for ph in self.phases:
            for device, shards in ph.slots:
                out.setdefault(device, []).extend(shards)
        return dict(sorted(out.items()))


@dataclass(frozen=True)
class SchedulePlan:
    assignment: Assignment
    devices: tuple[DeviceId, ...]
    est_makespan: int
    est_sequential: int
    campaign_mode: str = "normal"
    programming_latency: int = 0
    bitstream_id: str = DEFAULT_BITSTREAM
    multi_fpga_partitioned: bool = False
    notes: tuple[str, ...] = field(default=())

    @property
    def est_speedup(self) -> float:
        return speedup(self.est_sequential, self.est_makespan)

    @property
    def phases(self) -> tuple[Phase, ...]:
        return self.assignment.phases

    def shards(self) -> list[Shard]:
        return [s for ph in self.phases for _, shards in ph.slots for s in shards]


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------


def speedup(seq, par) -> float:
    if seq <= 0 or par <= 0:
        raise ValueError(f"speedup needs positive durations, got {seq} and {par}")
    return seq / par


def lpt_partition(durations, m: int) -> dict[int, list[int]]:
    """Longest-processing-time-first assignment of items to ``m`` machines.

    Items are taken by decreasing duration (lower index first on ties) and
    each goes to the least-loaded machine (lower index first on ties).
    Returns machine index -> item indices in assignment order; every machine
    index is present, possibly with an empty list.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if not durations:
        raise ValueError("durations must be non-empty")
    if any(d <= 0 for d in durations):
        raise ValueError("durations must be positive")
    order = sorted(range(len(durations)), key=lambda i: (-durations[i], i))
    heap = [(0, k) for k in range(m)]
    out: dict[int, list[int]] = {k: [] for k in range(m)}
    for i in order:
        load, k = heapq.heappop(heap)
        out[k].append(i)
        heapq.heappush(heap, (load + durations[i], k))
    return out


def partition_makespan(durations, parts: dict[int, list[int]]):
    return max(sum(durations[i] for i in items) for items in parts.values())


def shard_suite(suite: TestSuite, n_devices: int) -> list[Shard]:
    """Cut a divisible suite into ``min(n_devices, total_tests)`` contiguous shards.

    Shard sizes differ by at most one test; larger shards come first.
    """
    if not suite.divisible:
        raise SchedulingError(f"suite {suite.name!r} is {suite.divisibility} and cannot be sharded")
    if n_devices < 1:
        raise ValueError("n_devices must be >= 1")
    n = suite.total_tests
    k = min(n_devices, n)
    base, extra = divmod(n, k)
    shards = []
    lo = 0
    for i in range(k):
        hi = lo + base + (1 if i < extra else 0)
        shards.append(Shard(suite.name, lo, hi, suite.span_duration(lo, hi)))
        lo = hi
    return shards


def _replay_scaled(shards: list[Shard], recorded: int) -> list[Shard]:
    # Largest shard takes exactly the recorded parallel time, the rest pro rata.
    biggest = max(s.test_count for s in shards)
    return [
        Shard(s.suite, s.lo, s.hi, prorate(recorded, s.test_count, biggest), s.copy)
        for s in shards
    ]


def estimate_makespan(assignment: Assignment, programming_latency: int = 0) -> int:
    """Programming latency plus the sum of per-phase makespans (deciseconds)."""
    return programming_latency + sum(ph.makespan for ph in assignment.phases)


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------


def _sharded_phase(suite: TestSuite, devices: list[DeviceId], shards: list[Shard]) -> Phase:
    parts = lpt_partition([s.est_duration or 1 for s in shards], len(devices))
    slots = tuple(
        (devices[k], tuple(shards[i] for i in sorted(items)))
        for k, items in parts.items()
        if items
    )
    return Phase(suite.name, "sharded", slots)


def plan(
    manifest: Manifest,
    fleet: Fleet,
    mode: str = "normal",
    n_devices: int = 8,
    estimation: str = "model",
    bitstream_id: str = DEFAULT_BITSTREAM,
    suites: list[str] | None = None,
) -> SchedulePlan:
    """Build the phased schedule for a campaign over ``n_devices`` devices.

    ``mode`` is ``normal`` or ``stability``; ``estimation`` is ``model``
    (uniform per-test durations) or ``replay`` (recorded parallel durations
    where the manifest has them for this device count).
    """
    if mode not in CAMPAIGN_MODES:
        raise ConfigError(f"unknown campaign mode {mode!r}")
    if estimation not in ESTIMATION_MODES:
        raise ConfigError(f"unknown estimation mode {estimation!r}")
    if not manifest.suites:
        raise SchedulingError("manifest has no suites")
    if n_devices < 1:
        raise ConfigError("n_devices must be >= 1")
    if n_devices > len(fleet):
        raise InsufficientCapacityError(n_devices, len(fleet))
    devices = fleet.acquire(n_devices, bitstream_id)

    selected = manifest.suites
    if suites is not None:
        unknown = set(suites) - {s.name for s in manifest.suites}
        if unknown:
            raise ConfigError(f"unknown suites: {sorted(unknown)}")
        selected = tuple(s for s in manifest.suites if s.name in suites)

    notes: list[str] = []
    replay_ok = estimation == "replay" and manifest.recorded_devices == n_devices
    if estimation == "replay" and not replay_ok and n_devices > 1:
        if manifest.recorded_devices is None:
            notes.append("manifest carries no recorded parallel durations; uniform model used")
        else:
            notes.append(
                f"recorded durations are for {manifest.recorded_devices} devices; "
                f"uniform model used for {n_devices}"
            )

    phases: list[Phase] = []
    sequential = 0
    for suite in selected:
        if suite.divisible:
            shards = shard_suite(suite, n_devices)
            if replay_ok and suite.recorded_parallel_duration is not None and len(shards) > 1:
                shards = _replay_scaled(shards, suite.recorded_parallel_duration)
            phases.append(_sharded_phase(suite, devices, shards))
            sequential += suite.seq_duration
        elif mode == "stability" and suite.divisibility == "replicated":
            if suite.replicas > n_devices:
                raise InsufficientCapacityError(suite.replicas, n_devices)
            slots = tuple(
                (devices[c], (Shard(suite.name, 0, suite.total_tests, suite.seq_duration, copy=c),))
                for c in range(suite.replicas)
            )
            phases.append(Phase(suite.name, "replicated", slots))
            sequential += suite.seq_duration * suite.replicas
        else:
            whole = Shard(suite.name, 0, suite.total_tests, suite.seq_duration)
            phases.append(Phase(suite.name, "whole", ((devices[0], (whole,)),)))
            sequential += suite.seq_duration

    assignment = Assignment(tuple(phases), "replay" if replay_ok else "model")
    latency = manifest.fleet_default.programming_latency
    makespan = estimate_makespan(assignment, latency)
    return SchedulePlan(
        assignment=assignment,
        devices=tuple(devices),
        est_makespan=makespan,
        est_sequential=sequential + latency,
        campaign_mode=mode,
        programming_latency=latency,
        bitstream_id=bitstream_id,
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# Plan documents
# ---------------------------------------------------------------------------


def plan_to_data(p: SchedulePlan) -> dict:
    phases = []
    t = p.programming_latency
    for ph in p.phases:
        slots = []
        for device, shards in ph.slots:
            offset = t
            rows = []
            for s in shards:
                rows.append({
                    "lo": s.lo,
                    "hi": s.hi,
                    "copy": s.copy,
                    "est_duration": ds_scalar(s.est_duration),
                    "start": ds_scalar(offset),
                    "end": ds_scalar(offset + s.est_duration),
                })
                offset += s.est_duration
            slots.append({"device": str(device), "shards": rows})
        phases.append({"suite": ph.suite, "kind": ph.kind, "start": ds_scalar(t), "slots": slots})
        t += ph.makespan
    return {
        "campaign_mode": p.campaign_mode,
        "estimation": p.assignment.mode,
        "bitstream": p.bitstream_id,
        "devices": [str(d) for d in p.devices],
        "programming_latency": ds_scalar(p.programming_latency),
        "est_makespan": ds_scalar(p.est_makespan),
        "est_sequential": ds_scalar(p.est_sequential),
        "est_speedup": round(p.est_speedup, 2),
        "multi_fpga_partitioned": p.multi_fpga_partitioned,
        "notes": list(p.notes),
        "phases": phases,
    }


def emit_plan(p: SchedulePlan) -> str:
    return yaml.safe_dump(plan_to_data(p), sort_keys=False, default_flow_style=None, width=120)


def plan_from_data(data: dict) -> SchedulePlan:
    try:
        phases = []
        for ph in data["phases"]:
            slots = []
            for slot in ph["slots"]:
                shards = tuple(
                    Shard(ph["suite"], int(r["lo"]), int(r["hi"]),
                          seconds_to_ds(r["est_duration"]), int(r.get("copy", 0)))
                    for r in slot["shards"]
                )
                slots.append((DeviceId.parse(slot["device"]), shards))
            phases.append(Phase(ph["suite"], ph["kind"], tuple(slots)))
        assignment = Assignment(tuple(phases), data.get("estimation", "model"))
        latency = seconds_to_ds(data.get("programming_latency", 0))
        return SchedulePlan(
            assignment=assignment,
            devices=tuple(DeviceId.parse(d) for d in data["devices"]),
            est_makespan=estimate_makespan(assignment, latency),
            est_sequential=seconds_to_ds(data["est_sequential"]),
            campaign_mode=data.get("campaign_mode", "normal"),
            programming_latency=latency,
            bitstream_id=data.get("bitstream", DEFAULT_BITSTREAM),
            multi_fpga_partitioned=bool(data.get("multi_fpga_partitioned", False)),
            notes=tuple(data.get("notes", ())),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed plan document: {exc!r}") from exc


def parse_plan(text: str) -> SchedulePlan:
    from fleetreg.manifest import load_yaml

    return plan_from_data(load_yaml(text))
