"""Campaign manifest: test suites, CI stages and the default fleet.

A manifest is the machine-readable form of a regression campaign.  It is
parsed strictly (unknown keys are errors), validated against the type
invariants, and emitted canonically so that ``parse(emit(m)) == m``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace

import yaml

from fleetreg.errors import ManifestSyntaxError, SchemaError, VersionMismatchError
from fleetreg.units import format_ds, prorate, seconds_to_ds

SCHEMA_VERSION = 1

CATEGORIES = ("integration", "baremetal", "os")
STAGE_KINDS = ("lint", "simulation", "uvm", "bitstream", "fpga_test", "drops")
DIVISIBILITY = ("divisible", "unified", "replicated")

PER_TEST_SUM_TOLERANCE = 0.005

_IDENT_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.\-]*$")
_REPLICATED_RE = re.compile(r"^replicated\((\d+)\)$")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FleetSpec:
    nodes: int
    devices_per_node: int
    programming_latency: int = 0  # deciseconds

    @property
    def total_devices(self) -> int:
        return self.nodes * self.devices_per_node


@dataclass(frozen=True)
class StageSpec:
    name: str
    kind: str
    depends_on: tuple[str, ...] = ()
    nominal_duration: int = 0  # deciseconds


@dataclass(frozen=True)
class CoverageRecord:
    """Coverage percentages as ingested from the verification flow."""

    statements: float
    branches: float
    toggle: float
    total: float


@dataclass(frozen=True)
class TestSuite:
    """A named category of tests.

    ``divisibility`` is one of ``divisible``, ``unified`` or ``replicated``;
    for ``replicated`` the copy count lives in ``replicas``.  Replicated suites
    behave like unified ones outside stability campaigns.
    """

    __test__ = False  # keep pytest from collecting this class

    name: str
    category: str
    total_tests: int
    seq_duration: int  # deciseconds on one device
    divisibility: str = "divisible"
    replicas: int = 1
    failure_threshold: float = 0.0
    per_test_durations: tuple[int, ...] | None = None
    recorded_parallel_duration: int | None = None
    description: str = ""

    @property
    def divisible(self) -> bool:
        return self.divisibility == "divisible"

    @property
    def divisibility_label(self) -> str:
        if self.divisibility == "replicated":
            return f"replicated({self.replicas})"
        return self.divisibility

    def test_duration(self, index: int) -> int:
        return self.span_duration(index, index + 1)

    def span_duration(self, lo: int, hi: int) -> int:
        """Duration of tests ``[lo, hi)`` in deciseconds.

        Without per-test data every test takes ``seq_duration / total_tests``;
        cumulative rounding keeps the spans of any partition summing exactly
        to ``seq_duration``.
        """
        if self.per_test_durations is not None:
            return sum(self.per_test_durations[lo:hi])
        n = self.total_tests
        return prorate(self.seq_duration, hi, n) - prorate(self.seq_duration, lo, n)


@dataclass(frozen=True)
class Manifest:
    suites: tuple[TestSuite, ...]
    stages: tuple[StageSpec, ...] = ()
    fleet_default: FleetSpec = field(default_factory=lambda: FleetSpec(1, 8, 0))
    schema_version: int = SCHEMA_VERSION
    # Device count the recorded_parallel_duration values were measured on.
    recorded_devices: int | None = None
    # Externally reported single-device total, kept next to the column sum.
    reference_sequential_total: int | None = None
    coverage: CoverageRecord | None = None

    def suite(self, name: str) -> TestSuite:
        for s in self.suites:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def sequential_total(self) -> int:
        return sum(s.seq_duration for s in self.suites)

    @property
    def total_tests(self) -> int:
        return sum(s.total_tests for s in self.suites)


@dataclass(frozen=True)
class Violation:
    code: str
    path: str
    reason: str


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def find_cycle(edges: dict[str, tuple[str, ...]]) -> list[str] | None:
    """Return one cycle (as a node list) in a dependency map, or None."""
    WHITE, GREY, BLACK = 0, 1, 2
    color = {n: WHITE for n in edges}
    stack: list[str] = []

    def visit(node: str) -> list[str] | None:
        color[node] = GREY
        stack.append(node)
        for dep in edges.get(node, ()):
            if dep not in color:
                continue
            if color[dep] == GREY:
                return stack[stack.index(dep):] + [dep]
            if color[dep] == WHITE:
                found = visit(dep)
                if found:
                    return found
        stack.pop()
        color[node] = BLACK
        return None

    for node in edges:
        if color[node] == WHITE:
            found = visit(node)
            if found:
                return found
    return None


def validate_manifest(m: Manifest) -> list[Violation]:
    """Check every manifest invariant; an empty list means the manifest is valid."""
    out: list[Violation] = []

    def bad(code: str, path: str, reason: str) -> None:
        out.append(Violation(code, path, reason))

    if m.schema_version != SCHEMA_VERSION:
        bad("schema-version", "schema_version", f"expected {SCHEMA_VERSION}, got {m.schema_version}")

    fleet = m.fleet_default
    if fleet.nodes < 1:
        bad("fleet-nonpositive", "fleet.nodes", "must be >= 1")
    if fleet.devices_per_node < 1:
        bad("fleet-nonpositive", "fleet.devices_per_node", "must be >= 1")
    if fleet.programming_latency < 0:
        bad("programming-latency-negative", "fleet.programming_latency", "must be >= 0")

    if not m.suites:
        bad("no-suites", "suites", "at least one suite is required")

    first_seen: dict[str, int] = {}
    for i, s in enumerate(m.suites):
        p = f"suites[{i}]"
        if not _IDENT_RE.match(s.name):
            bad("identifier-invalid", f"{p}.name", f"{s.name!r} is not an identifier")
        if s.name in first_seen:
            bad("suite-name-duplicate", f"{p}.name",
                f"{s.name!r} also defined at suites[{first_seen[s.name]}]")
        else:
            first_seen[s.name] = i
        if s.category not in CATEGORIES:
            bad("category-unknown", f"{p}.category", f"{s.category!r} not in {CATEGORIES}")
        if s.total_tests < 1:
            bad("total-tests-nonpositive", f"{p}.total_tests", "must be >= 1")
        if s.seq_duration <= 0:
            bad("seq-duration-nonpositive", f"{p}.seq_duration", "must be > 0")
        if s.divisibility not in DIVISIBILITY:
            bad("divisibility-unknown", f"{p}.divisibility", f"{s.divisibility!r} not recognised")
        if s.divisibility == "replicated" and s.replicas < 1:
            bad("replicas-nonpositive", f"{p}.divisibility", "replica count must be >= 1")
        if s.divisibility != "replicated" and s.replicas != 1:
            bad("replicas-without-replication", f"{p}.divisibility",
                "only replicated suites carry a replica count")
        if not 0.0 <= s.failure_threshold <= 1.0:
            bad("threshold-out-of-range", f"{p}.failure_threshold",
                f"{s.failure_threshold} not in [0, 1]")
        if s.per_test_durations is not None:
            pt = s.per_test_durations
            if len(pt) != s.total_tests:
                bad("per-test-length-mismatch", f"{p}.per_test_durations",
                    f"{len(pt)} entries for {s.total_tests} tests")
            if any(d <= 0 for d in pt):
                bad("per-test-nonpositive", f"{p}.per_test_durations", "every duration must be > 0")
            total = sum(pt)
            if s.seq_duration > 0 and abs(total - s.seq_duration) > PER_TEST_SUM_TOLERANCE * s.seq_duration:
                bad("per-test-sum-mismatch", f"{p}.per_test_durations",
                    f"sum {format_ds(total)}s differs from seq_duration "
                    f"{format_ds(s.seq_duration)}s by more than 0.5%")
        if s.recorded_parallel_duration is not None:
            if s.recorded_parallel_duration <= 0:
                bad("recorded-duration-nonpositive", f"{p}.recorded_parallel_duration", "must be > 0")
            if not s.divisible:
                bad("recorded-duration-on-whole-suite", f"{p}.recorded_parallel_duration",
                    "only divisible suites have a parallel duration")

    if m.recorded_devices is not None and m.recorded_devices < 1:
        bad("recorded-devices-nonpositive", "recorded_devices", "must be >= 1")
    if m.reference_sequential_total is not None and m.reference_sequential_total <= 0:
        bad("reference-total-nonpositive", "reference_sequential_total", "must be > 0")

    stage_index: dict[str, int] = {}
    for i, st in enumerate(m.stages):
        p = f"stages[{i}]"
        if not _IDENT_RE.match(st.name):
            bad("identifier-invalid", f"{p}.name", f"{st.name!r} is not an identifier")
        if st.name in stage_index:
            bad("stage-name-duplicate", f"{p}.name",
                f"{st.name!r} also defined at stages[{stage_index[st.name]}]")
        else:
            stage_index[st.name] = i
        if st.kind not in STAGE_KINDS:
            bad("stage-kind-unknown", f"{p}.kind", f"{st.kind!r} not in {STAGE_KINDS}")
        if st.nominal_duration < 0:
            bad("stage-duration-negative", f"{p}.nominal_duration", "must be >= 0")
    for i, st in enumerate(m.stages):
        for dep in st.depends_on:
            if dep not in stage_index:
                bad("stage-unknown-dependency", f"stages[{i}].depends_on",
                    f"{dep!r} is not a stage")
    cycle = find_cycle({st.name: st.depends_on for st in m.stages})
    if cycle:
        bad("stage-dag-cycle", "stages", "dependency cycle " + " -> ".join(cycle))

    if m.coverage is not None:
        for name in ("statements", "branches", "toggle", "total"):
            v = getattr(m.coverage, name)
            if not 0.0 <= v <= 100.0:
                bad("coverage-out-of-range", f"coverage.{name}", f"{v} not in [0, 100]")
    return out


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


class _StrictLoader(yaml.SafeLoader):
    """SafeLoader that refuses duplicate mapping keys."""


def _construct_mapping(loader, node, deep=False):
    seen = {}
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in seen:
            mark = key_node.start_mark
            raise ManifestSyntaxError(f"duplicate key {key!r}", mark.line + 1, mark.column + 1)
        seen[key] = True
    return yaml.SafeLoader.construct_mapping(loader, node, deep=deep)


_StrictLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def load_yaml(text: str):
    """Strict YAML load with position-reporting syntax errors."""
    try:
        return yaml.load(text, Loader=_StrictLoader)  # noqa: S506 - strict SafeLoader subclass
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ManifestSyntaxError(str(exc.problem or exc), line, col) from exc
    except yaml.YAMLError as exc:
        raise ManifestSyntaxError(str(exc)) from exc


class _Reader:
    """Collects structural problems while converting raw YAML into values."""

    def __init__(self):
        self.problems: list[Violation] = []

    def fail(self, path: str, reason: str, code: str = "type-error"):
        self.problems.append(Violation(code, path, reason))

    def mapping(self, raw, path: str, required: tuple[str, ...], optional: tuple[str, ...] = ()):
        if not isinstance(raw, dict):
            self.fail(path, f"expected a mapping, got {type(raw).__name__}")
            return None
        for key in raw:
            if key not in required and key not in optional:
                self.fail(f"{path}.{key}" if path else str(key), "unknown key", "unknown-key")
        for key in required:
            if key not in raw:
                self.fail(f"{path}.{key}" if path else key, "missing required key", "missing-key")
        return raw

    def integer(self, raw, path: str):
        if isinstance(raw, bool) or not isinstance(raw, int):
            self.fail(path, f"expected an integer, got {raw!r}")
            return 0
        return raw

    def number(self, raw, path: str):
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            self.fail(path, f"expected a number, got {raw!r}")
            return 0.0
        return float(raw)

    def duration(self, raw, path: str):
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            self.fail(path, f"expected seconds, got {raw!r}")
            return 0
        try:
            return seconds_to_ds(raw)
        except ValueError as exc:
            self.fail(path, str(exc), "duration-precision")
            return 0

    def string(self, raw, path: str):
        if not isinstance(raw, str):
            self.fail(path, f"expected a string, got {raw!r}")
            return ""
        return raw

    def seq(self, raw, path: str):
        if not isinstance(raw, list):
            self.fail(path, f"expected a list, got {type(raw).__name__}")
            return []
        return raw


_SUITE_REQUIRED = ("name", "category", "total_tests", "seq_duration", "divisibility", "failure_threshold")
_SUITE_OPTIONAL = ("per_test_durations", "recorded_parallel_duration", "description")
_STAGE_KEYS = ("name", "kind", "depends_on", "nominal_duration")
_FLEET_KEYS = ("nodes", "devices_per_node", "programming_latency")
_COVERAGE_KEYS = ("statements", "branches", "toggle", "total")
_TOP_REQUIRED = ("schema_version", "fleet", "stages", "suites")
_TOP_OPTIONAL = ("recorded_devices", "reference_sequential_total", "coverage")


def _read_fleet(r: _Reader, raw, path: str) -> FleetSpec:
    d = r.mapping(raw, path, ("nodes", "devices_per_node"), ("programming_latency",))
    if d is None:
        return FleetSpec(1, 1, 0)
    return FleetSpec(
        nodes=r.integer(d.get("nodes", 0), f"{path}.nodes"),
        devices_per_node=r.integer(d.get("devices_per_node", 0), f"{path}.devices_per_node"),
        programming_latency=r.duration(d.get("programming_latency", 0), f"{path}.programming_latency"),
    )


def _read_stage(r: _Reader, raw, path: str) -> StageSpec:
    d = r.mapping(raw, path, _STAGE_KEYS)
    if d is None:
        return StageSpec("", "lint")
    deps = tuple(r.string(x, f"{path}.depends_on[{j}]")
                 for j, x in enumerate(r.seq(d.get("depends_on", []), f"{path}.depends_on")))
    return StageSpec(
        name=r.string(d.get("name", ""), f"{path}.name"),
        kind=r.string(d.get("kind", ""), f"{path}.kind"),
        depends_on=deps,
        nominal_duration=r.duration(d.get("nominal_duration", 0), f"{path}.nominal_duration"),
    )


def _read_suite(r: _Reader, raw, path: str) -> TestSuite:
    d = r.mapping(raw, path, _SUITE_REQUIRED, _SUITE_OPTIONAL)
    if d is None:
        return TestSuite("", "baremetal", 1, 1)
    div_raw = r.string(d.get("divisibility", ""), f"{path}.divisibility")
    replicas = 1
    m = _REPLICATED_RE.match(div_raw)
    if m:
        divisibility, replicas = "replicated", int(m.group(1))
    elif div_raw in ("divisible", "unified"):
        divisibility = div_raw
    elif "divisibility" not in d:
        divisibility = "divisible"
    else:
        r.fail(f"{path}.divisibility", f"{div_raw!r} is not divisible, unified or replicated(n)",
               "divisibility-unknown")
        divisibility = "divisible"
    per_test = None
    if "per_test_durations" in d:
        items = r.seq(d["per_test_durations"], f"{path}.per_test_durations")
        per_test = tuple(r.duration(x, f"{path}.per_test_durations[{j}]") for j, x in enumerate(items))
    recorded = None
    if "recorded_parallel_duration" in d:
        recorded = r.duration(d["recorded_parallel_duration"], f"{path}.recorded_parallel_duration")
    return TestSuite(
        name=r.string(d.get("name", ""), f"{path}.name"),
        category=r.string(d.get("category", ""), f"{path}.category"),
        total_tests=r.integer(d.get("total_tests", 0), f"{path}.total_tests"),
        seq_duration=r.duration(d.get("seq_duration", 0), f"{path}.seq_duration"),
        divisibility=divisibility,
        replicas=replicas,
        failure_threshold=r.number(d.get("failure_threshold", 0.0), f"{path}.failure_threshold"),
        per_test_durations=per_test,
        recorded_parallel_duration=recorded,
        description=r.string(d.get("description", ""), f"{path}.description"),
    )


def manifest_from_data(data) -> Manifest:
    """Build and validate a Manifest from already-loaded YAML data."""
    if not isinstance(data, dict):
        raise SchemaError([Violation("type-error", "", "document must be a mapping")])
    version = data.get("schema_version")
    if isinstance(version, bool) or version != SCHEMA_VERSION:
        raise VersionMismatchError(version, SCHEMA_VERSION)

    r = _Reader()
    d = r.mapping(data, "", _TOP_REQUIRED, _TOP_OPTIONAL)
    fleet = _read_fleet(r, d["fleet"], "fleet") if "fleet" in d else FleetSpec(1, 1, 0)
    stages = tuple(_read_stage(r, s, f"stages[{i}]")
                   for i, s in enumerate(r.seq(d.get("stages", []), "stages")))
    suites = tuple(_read_suite(r, s, f"suites[{i}]")
                   for i, s in enumerate(r.seq(d.get("suites", []), "suites")))
    recorded_devices = None
    if "recorded_devices" in d:
        recorded_devices = r.integer(d["recorded_devices"], "recorded_devices")
    reference = None
    if "reference_sequential_total" in d:
        reference = r.duration(d["reference_sequential_total"], "reference_sequential_total")
    coverage = None
    if "coverage" in d:
        c = r.mapping(d["coverage"], "coverage", _COVERAGE_KEYS)
        if c is not None:
            coverage = CoverageRecord(*(r.number(c.get(k, 0), f"coverage.{k}") for k in _COVERAGE_KEYS))
    if r.problems:
        raise SchemaError(r.problems)

    m = Manifest(
        suites=suites,
        stages=stages,
        fleet_default=fleet,
        schema_version=version,
        recorded_devices=recorded_devices,
        reference_sequential_total=reference,
        coverage=coverage,
    )
    violations = validate_manifest(m)
    if violations:
        raise SchemaError(violations)
    return m


def parse_manifest(text: str) -> Manifest:
    return manifest_from_data(load_yaml(text))


def load_manifest(path) -> Manifest:
    with open(path, encoding="utf-8") as fh:
        return parse_manifest(fh.read())


# ---------------------------------------------------------------------------
# Canonical emission
# ---------------------------------------------------------------------------


def yaml_str(value: str) -> str:
    """Plain scalar when it is unambiguous, JSON-quoted otherwise."""
    if value and re.match(r"^[A-Za-z_][A-Za-z0-9_.\-()]*$", value) and \
            value.lower() not in ("true", "false", "yes", "no", "on", "off", "null", "y", "n", "~"):
        return value
    return json.dumps(value, ensure_ascii=False)


def yaml_float(value: float) -> str:
    return repr(float(value))


def _flow(pairs: list[tuple[str, str]]) -> str:
    return "{" + ", ".join(f"{k}: {v}" for k, v in pairs) + "}"


def emit_manifest(m: Manifest) -> str:
    lines = [f"schema_version: {m.schema_version}"]
    f = m.fleet_default
    lines.append("fleet: " + _flow([
        ("nodes", str(f.nodes)),
        ("devices_per_node", str(f.devices_per_node)),
        ("programming_latency", format_ds(f.programming_latency)),
    ]))
    if m.recorded_devices is not None:
        lines.append(f"recorded_devices: {m.recorded_devices}")
    if m.reference_sequential_total is not None:
        lines.append(f"reference_sequential_total: {format_ds(m.reference_sequential_total)}")
    if m.coverage is not None:
        c = m.coverage
        lines.append("coverage: " + _flow([(k, yaml_float(getattr(c, k))) for k in _COVERAGE_KEYS]))
    if m.stages:
        lines.append("stages:")
        for st in m.stages:
            deps = "[" + ", ".join(yaml_str(d) for d in st.depends_on) + "]"
            lines.append("  - " + _flow([
                ("name", yaml_str(st.name)),
                ("kind", yaml_str(st.kind)),
                ("depends_on", deps),
                ("nominal_duration", format_ds(st.nominal_duration)),
            ]))
    else:
        lines.append("stages: []")
    lines.append("suites:")
    for s in m.suites:
        pairs = [
            ("name", yaml_str(s.name)),
            ("category", yaml_str(s.category)),
            ("total_tests", str(s.total_tests)),
            ("seq_duration", format_ds(s.seq_duration)),
            ("divisibility", yaml_str(s.divisibility_label)),
            ("failure_threshold", yaml_float(s.failure_threshold)),
        ]
        if s.recorded_parallel_duration is not None:
            pairs.append(("recorded_parallel_duration", format_ds(s.recorded_parallel_duration)))
        if s.per_test_durations is not None:
            pairs.append(("per_test_durations",
                          "[" + ", ".join(format_ds(d) for d in s.per_test_durations) + "]"))
        if s.description:
            pairs.append(("description", yaml_str(s.description)))
        lines.append("  - " + _flow(pairs))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Builtin campaign
# ---------------------------------------------------------------------------

# (name, category, tests, 1-device seconds, 8-device seconds or None, divisibility, description)
_BZL_ROWS = (
    ("spi", "integration", 1, "59", None, "unified", "Flash tests (read/write/erase)"),
    ("jtag-debug", "integration", 109, "1102", "138", "divisible", "OpenOCD and JTAG tests (mem/reg)"),
    ("vec-axpy", "baremetal", 50, "524", "65.5", "divisible", "Vector fused multiply-add"),
    ("vec-gemm", "baremetal", 70, "728", "91", "divisible", "Dense matrix multiplies, multiple sizes"),
    ("vec-stream", "baremetal", 50, "536", "67", "divisible", "Bandwidth, load/store, copy, triad"),
    ("vec-somier", "baremetal", 20, "208", "26", "divisible", "Reduction and exponential kernels"),
    ("spmv", "baremetal", 40, "415", "53.5", "divisible", "Sparse matrix-vector multiply"),
    ("litmus", "baremetal", 1370, "13892", "1736.5", "divisible", "Multi-core coherency tests"),
    ("rv-tests", "baremetal", 18, "132", "16.5", "divisible", "RISC-V benchmark"),
    ("ethernet-driver", "os", 6, "541", "91.6", "divisible", "ping/scp/ssh fpga-to-fpga and host-to-fpga"),
    ("linux-boot", "os", 1, "115", None, "replicated(8)", "Buildroot with OpenSBI"),
    # Counted as one test case (about 500 stressors) so the campaign totals 1738 tests.
    ("stress-ng", "os", 1, "670", None, "replicated(8)", "System stress tests (~500 stressors)"),
    ("test_dd", "os", 1, "22", None, "replicated(8)", "Linux dd command"),
    ("test_plic", "os", 1, "18", None, "replicated(8)", "Interrupt tests"),
)

BZL_STATED_SEQUENTIAL_TOTAL = seconds_to_ds(18754)
BZL_STATED_PARALLEL_TOTAL = seconds_to_ds(3169.6)

BUILTIN_STAGES = (
    StageSpec("lint", "lint", (), seconds_to_ds(300)),
    StageSpec("simulation", "simulation", ("lint",), seconds_to_ds(1800)),
    StageSpec("uvm", "uvm", ("lint",), seconds_to_ds(5400)),
    StageSpec("bitstream", "bitstream", ("lint",), seconds_to_ds(10800)),
    StageSpec("fpga_test", "fpga_test", ("bitstream",), seconds_to_ds(3170)),
    StageSpec("drops", "drops", ("simulation", "uvm", "fpga_test"), seconds_to_ds(600)),
)


def builtin_bzl_manifest() -> Manifest:
    """The 14-suite FPGA campaign on a 12-node x 8-device cluster."""
    suites = []
    for name, category, tests, seq, par, div, desc in _BZL_ROWS:
        m = _REPLICATED_RE.match(div)
        suites.append(TestSuite(
            name=name,
            category=category,
            total_tests=tests,
            seq_duration=seconds_to_ds(seq),
            divisibility="replicated" if m else div,
            replicas=int(m.group(1)) if m else 1,
            failure_threshold=0.0,
            recorded_parallel_duration=seconds_to_ds(par) if par else None,
            description=desc,
        ))
    return Manifest(
        suites=tuple(suites),
        stages=BUILTIN_STAGES,
        fleet_default=FleetSpec(nodes=12, devices_per_node=8, programming_latency=0),
        recorded_devices=8,
        reference_sequential_total=BZL_STATED_SEQUENTIAL_TOTAL,
        coverage=CoverageRecord(statements=91.0, branches=82.0, toggle=65.0, total=80.0),
    )


def without_recordings(m: Manifest) -> Manifest:
    """Copy of ``m`` with every recorded parallel duration removed."""
    return replace(
        m,
        suites=tuple(replace(s, recorded_parallel_duration=None) for s in m.suites),
        recorded_devices=None,
    )
