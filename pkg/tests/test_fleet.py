import random
import threading

import pytest

from fleetreg.errors import ConfigError, IllegalTransitionError, InsufficientCapacityError, UnknownDeviceError
from fleetreg.fleet import (
    DeviceId,
    Fail,
    Failed,
    Free,
    JobDone,
    ProgramDone,
    Programming,
    Ready,
    Reset,
    Running,
    StartJob,
    StartProgram,
    init_fleet,
    next_state,
)
from fleetreg.manifest import FleetSpec


@pytest.mark.parametrize("nodes, per_node, count", [(12, 8, 96), (1, 8, 8), (1, 1, 1)])
def test_init_fleet_sizes(nodes, per_node, count):
    fleet = init_fleet(FleetSpec(nodes, per_node))
    assert len(fleet) == count
    assert all(isinstance(st, Free) for st in fleet.states.values())
    assert fleet.devices == sorted(fleet.devices)


def test_zero_size_fleet_rejected():
    with pytest.raises(ConfigError):
        init_fleet(FleetSpec(0, 8))


def test_device_id_text_round_trip():
    d = DeviceId(3, 7)
    assert str(d) == "n3d7"
    assert DeviceId.parse("n3d7") == d


class TestTransitions:
    def test_program_sets_deadline(self):
        fleet = init_fleet(FleetSpec(1, 1))
        d = DeviceId(0, 0)
        fleet.advance_clock(100)
        assert fleet.transition(d, StartProgram("b", latency=300)) == Programming("b", until=400)

    def test_ready_to_running_and_back(self):
        fleet = init_fleet(FleetSpec(1, 1))
        d = DeviceId(0, 0)
        fleet.transition(d, StartProgram("b"))
        fleet.transition(d, ProgramDone())
        assert fleet.transition(d, StartJob("j")) == Running("j", "b")
        assert fleet.transition(d, JobDone()) == Ready("b")

    def test_running_cannot_be_reprogrammed(self):
        fleet = init_fleet(FleetSpec(1, 1))
        d = DeviceId(0, 0)
        for ev in (StartProgram("b"), ProgramDone(), StartJob("j")):
            fleet.transition(d, ev)
        with pytest.raises(IllegalTransitionError) as exc:
            fleet.transition(d, StartProgram("b2"))
        assert "Running(j)" in str(exc.value) and "StartProgram" in str(exc.value)
        assert fleet.state(d) == Running("j", "b")

    def test_failed_needs_reset(self):
        fleet = init_fleet(FleetSpec(1, 1))
        d = DeviceId(0, 0)
        fleet.transition(d, Fail("wedged"))
        with pytest.raises(IllegalTransitionError):
            fleet.transition(d, StartProgram("b"))
        assert fleet.transition(d, Reset()) == Free()

    def test_unknown_device(self):
        fleet = init_fleet(FleetSpec(1, 2))
        with pytest.raises(UnknownDeviceError):
            fleet.transition(DeviceId(0, 5), StartProgram("b"))


# Edges allowed by the lifecycle, by (state class, event class).
LEGAL = {
    (Free, StartProgram), (Programming, ProgramDone), (Ready, StartJob), (Running, JobDone), (Failed, Reset),
} | {(s, Fail) for s in (Free, Programming, Ready, Running, Failed)}

EVENTS = [StartProgram("b", 5), ProgramDone(), StartJob("j"), JobDone(), Fail("x"), Reset()]


@pytest.mark.parametrize("seed", range(20))
def test_random_event_sequences_respect_table(seed):
    rng = random.Random(seed)
    fleet = init_fleet(FleetSpec(2, 3))
    devices = fleet.devices
    for _ in range(400):
        d = rng.choice(devices)
        ev = rng.choice(EVENTS)
        before = fleet.state(d)
        legal = (type(before), type(ev)) in LEGAL
        if legal:
            fleet.transition(d, ev)
        else:
            with pytest.raises(IllegalTransitionError):
                fleet.transition(d, ev)
            assert fleet.state(d) == before
        assert len(fleet) == 6


def test_next_state_table_matches_legal_set():
    states = [Free(), Programming("b", 0), Ready("b"), Running("j", "b"), Failed("x")]
    for st in states:
        for ev in EVENTS:
            assert (next_state(st, ev, 0) is not None) == ((type(st), type(ev)) in LEGAL)


class TestAcquire:
    def test_fresh_node(self, node_fleet):
        assert node_fleet.acquire(8, "b") == [DeviceId(0, s) for s in range(8)]

    def test_spills_to_next_node(self, big_fleet):
        for s in range(4):
            d = DeviceId(0, s)
            for ev in (StartProgram("b"), ProgramDone(), StartJob("j")):
                big_fleet.transition(d, ev)
        got = big_fleet.acquire(8, "b")
        assert got == [DeviceId(0, s) for s in range(4, 8)] + [DeviceId(1, s) for s in range(4)]

    def test_insufficient_capacity(self, node_fleet):
        with pytest.raises(InsufficientCapacityError) as exc:
            node_fleet.acquire(9, "b")
        assert exc.value.available == 8

    def test_failed_and_foreign_bitstream_excluded(self, node_fleet):
        node_fleet.transition(DeviceId(0, 0), Fail("x"))
        d1 = DeviceId(0, 1)
        node_fleet.transition(d1, StartProgram("other"))
        node_fleet.transition(d1, ProgramDone())
        d2 = DeviceId(0, 2)
        node_fleet.transition(d2, StartProgram("b"))
        node_fleet.transition(d2, ProgramDone())
        assert node_fleet.acquire(6, "b") == [DeviceId(0, s) for s in range(2, 8)]

    def test_deterministic(self, big_fleet):
        assert big_fleet.acquire(13, "b") == big_fleet.acquire(13, "b")


def test_snapshot_strings(node_fleet):
    node_fleet.transition(DeviceId(0, 1), Fail("uart hang"))
    snap = node_fleet.snapshot()
    assert snap["n0d0"] == "Free"
    assert snap["n0d1"] == "Failed(uart hang)"
    assert len(snap) == 8


def test_concurrent_submitters_are_serialized():
    fleet = init_fleet(FleetSpec(1, 8))
    devices = fleet.devices

    def cycle(d):
        fleet.transition(d, StartProgram("b"))
        fleet.transition(d, ProgramDone())
        for i in range(200):
            fleet.transition(d, StartJob(str(i)))
            fleet.transition(d, JobDone())

    threads = [threading.Thread(target=cycle, args=(d,)) for d in devices]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert set(fleet.snapshot().values()) == {"Ready(b)"}
