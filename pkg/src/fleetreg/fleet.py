"""Device inventory and the per-device lifecycle.

Each device walks ``Free -> Programming -> Ready <-> Running``; any state may
drop to ``Failed`` and only an explicit reset brings a failed device back to
``Free``.  All mutation goes through one lock-guarded owner (``Fleet``) so
runner threads can report events concurrently while readers take snapshots.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass

import yaml

from fleetreg.errors import (
    ConfigError,
    IllegalTransitionError,
    InsufficientCapacityError,
    UnknownDeviceError,
)
from fleetreg.manifest import FleetSpec
from fleetreg.units import format_ds


@dataclass(frozen=True, order=True)
class DeviceId:
    node_index: int
    slot_index: int

    def __str__(self) -> str:
        return f"n{self.node_index}d{self.slot_index}"

    @classmethod
    def parse(cls, text: str) -> "DeviceId":
        m = re.fullmatch(r"n(\d+)d(\d+)", text.strip())
        if not m:
            raise ValueError(f"bad device id {text!r}; expected n<node>d<slot>")
        return cls(int(m.group(1)), int(m.group(2)))


# --- states ----------------------------------------------------------------


@dataclass(frozen=True)
class Free:
    def __str__(self):
        return "Free"


@dataclass(frozen=True)
class Programming:
    bitstream_id: str
    until: int  # deciseconds

    def __str__(self):
        return f"Programming({self.bitstream_id}, until={format_ds(self.until)})"


@dataclass(frozen=True)
class Ready:
    bitstream_id: str

    def __str__(self):
        return f"Ready({self.bitstream_id})"


@dataclass(frozen=True)
class Running:
    job_id: str
    bitstream_id: str

    def __str__(self):
        return f"Running({self.job_id})"


@dataclass(frozen=True)
class Failed:
    reason: str

    def __str__(self):
        return f"Failed({self.reason})"


DeviceState = Free | Programming | Ready | Running | Failed


# --- events ----------------------------------------------------------------


@dataclass(frozen=True)
class StartProgram:
    bitstream_id: str
    latency: int = 0


@dataclass(frozen=True)
class ProgramDone:
    pass


@dataclass(frozen=True)
class StartJob:
    job_id: str


@dataclass(frozen=True)
class JobDone:
    pass


@dataclass(frozen=True)
class Fail:
    reason: str


@dataclass(frozen=True)
class Reset:
    pass


DeviceEvent = StartProgram | ProgramDone | StartJob | JobDone | Fail | Reset


def next_state(state: DeviceState, event: DeviceEvent, now: int) -> DeviceState | None:
    """The legal-transition table; None means the edge does not exist."""
    if isinstance(event, Fail):
        return Failed(event.reason)
    match state, event:
        case Free(), StartProgram(bitstream_id=b, latency=lat):
            return Programming(b, now + lat)
        case Programming(bitstream_id=b), ProgramDone():
            return Ready(b)
        case Ready(bitstream_id=b), StartJob(job_id=j):
            return Running(j, b)
        case Running(bitstream_id=b), JobDone():
            return Ready(b)
        case Failed(), Reset():
            return Free()
    return None


class Fleet:
    def __init__(self, spec: FleetSpec):
        if spec.nodes < 1 or spec.devices_per_node < 1:
            raise ConfigError(f"fleet must have at least one device, got {spec}")
        self.spec = spec
        self.clock = 0
        self._lock = threading.RLock()
        self._states: dict[DeviceId, DeviceState] = {
            DeviceId(n, s): Free()
            for n in range(spec.nodes)
            for s in range(spec.devices_per_node)
        }

    def __len__(self) -> int:
        return len(self._states)

    @property
    def devices(self) -> list[DeviceId]:
        return list(self._states)

    @property
    def states(self) -> dict[DeviceId, DeviceState]:
        with self._lock:
            return dict(self._states)

    def state(self, device: DeviceId) -> DeviceState:
        with self._lock:
            try:
                return self._states[device]
            except KeyError:
                raise UnknownDeviceError(f"unknown device {device}") from None

    def advance_clock(self, now: int) -> None:
        with self._lock:
            self.clock = max(self.clock, now)

    def transition(self, device: DeviceId, event: DeviceEvent) -> DeviceState:
        """Apply ``event``; illegal events raise and leave the state untouched."""
        with self._lock:
            current = self.state(device)
            new = next_state(current, event, self.clock)
            if new is None:
                raise IllegalTransitionError(device, current, event)
            self._states[device] = new
            return new

    def acquire(self, n: int, bitstream_id: str) -> list[DeviceId]:
        """Pick the ``n`` lowest-ordered devices that are Free or Ready(bitstream_id).

        Ordering is by (node, slot), so a request fills one node before it
        spills to the next.  Nothing is mutated; callers program Free devices
        themselves.
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        with self._lock:
            usable = [
                d for d, st in self._states.items()
                if isinstance(st, Free) or (isinstance(st, Ready) and st.bitstream_id == bitstream_id)
            ]
        if len(usable) < n:
            raise InsufficientCapacityError(n, len(usable))
        return usable[:n]

    def snapshot(self) -> dict[str, str]:
        with self._lock:
            return {str(d): str(st) for d, st in self._states.items()}

    def snapshot_yaml(self) -> str:
        return yaml.safe_dump(self.snapshot(), sort_keys=False, default_flow_style=False)


def init_fleet(spec: FleetSpec) -> Fleet:
    return Fleet(spec)
