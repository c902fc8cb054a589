"""CI trigger classification and job selection.

An incoming pipeline event is mapped to exactly one trigger configuration
(torture, daily, weekly, stability or none), which selects a job set.  Label
based disable controls then prune that set, removing every job whose stage
depends, directly or transitively, on a disabled stage.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

from fleetreg.errors import ConfigError
from fleetreg.manifest import BUILTIN_STAGES, STAGE_KINDS, StageSpec, load_yaml

log = logging.getLogger(__name__)

EVENT_KINDS = ("merge_request", "commit", "schedule", "manual")
_FALSY = {"", "0", "false", "no", "off"}


class TriggerKind(str, Enum):
    TORTURE = "Torture"
    DAILY = "Daily"
    WEEKLY = "Weekly"
    STABILITY = "Stability"
    NONE = "None"


@dataclass(frozen=True)
class PipelineEvent:
    kind: str
    target_branch: str = "main"
    labels: frozenset[str] = frozenset()
    variables: dict = field(default_factory=dict)
    commit_message_tags: frozenset[str] = frozenset()
    pinned_sha: str | None = None

    def __hash__(self):
        return hash((self.kind, self.target_branch, self.labels,
                     tuple(sorted(self.variables.items())), self.commit_message_tags, self.pinned_sha))

    def variable_set(self, name: str) -> bool:
        value = self.variables.get(name)
        return value is not None and str(value).strip().lower() not in _FALSY


@dataclass(frozen=True, order=True)
class JobId:
    kind: str
    variant: str

    def __str__(self):
        return f"{self.kind}:{self.variant}"


@dataclass(frozen=True)
class JobSet:
    jobs: frozenset[JobId] = frozenset()
    # labels ignored while pruning; informational, not part of equality
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __iter__(self):
        return iter(sorted(self.jobs, key=_job_order))

    def __len__(self):
        return len(self.jobs)

    def __contains__(self, item):
        return item in self.jobs

    def kinds(self) -> set[str]:
        return {j.kind for j in self.jobs}


def _job_order(job: JobId):
    return (STAGE_KINDS.index(job.kind) if job.kind in STAGE_KINDS else len(STAGE_KINDS), job.variant)


def _jobs(*pairs: tuple[str, str]) -> frozenset[JobId]:
    return frozenset(JobId(k, v) for k, v in pairs)


DEFAULT_JOBS = {
    TriggerKind.TORTURE: _jobs(("lint", "lint"), ("simulation", "smoke-sim"), ("uvm", "selective-uvm")),
    TriggerKind.DAILY: _jobs(("lint", "lint-standard"), ("simulation", "full-sim"),
                             ("bitstream", "bitstream-gen"), ("fpga_test", "fpga-daily")),
    TriggerKind.WEEKLY: _jobs(("fpga_test", "performance-suite"), ("fpga_test", "performance-validation"),
                              ("fpga_test", "fpga-8-cluster")),
    TriggerKind.STABILITY: _jobs(("fpga_test", "fpga-stability-extended")),
}

# label -> stage kinds it removes
DISABLE_LABELS = {
    "disable-uvm": ("uvm",),
    "no-bitstream-gen": ("bitstream",),
    "disable-sim": ("simulation",),
    "disable-fpga": ("fpga_test",),
}
LINT_ONLY_LABEL = "ci-test"


@dataclass(frozen=True)
class TriggerConfig:
    main_branch: str = "main"
    torture_tag: str = "verification"
    daily_variable: str = "daily"
    weekly_label: str = "weekly"
    stability_variable: str = "stability_test"
    jobs: dict = field(default_factory=lambda: dict(DEFAULT_JOBS))

    def __hash__(self):
        return id(self)


DEFAULT_CONFIG = TriggerConfig()


def classify_event(e: PipelineEvent, config: TriggerConfig = DEFAULT_CONFIG) -> TriggerKind:
    """Pick the single trigger kind for an event.

    Precedence when several signals are present: Stability, Weekly, Daily,
    Torture.
    """
    if e.variable_set(config.stability_variable):
        return TriggerKind.STABILITY
    if config.weekly_label in e.labels:
        return TriggerKind.WEEKLY
    if e.kind == "schedule" and e.variable_set(config.daily_variable):
        return TriggerKind.DAILY
    if e.kind == "merge_request" and e.target_branch == config.main_branch:
        return TriggerKind.TORTURE
    if e.kind == "commit" and config.torture_tag in e.commit_message_tags:
        return TriggerKind.TORTURE
    return TriggerKind.NONE


def select_jobs(kind: TriggerKind, config: TriggerConfig = DEFAULT_CONFIG) -> JobSet:
    if kind == TriggerKind.NONE:
        raise ValueError("no jobs are selected for TriggerKind.NONE")
    return JobSet(frozenset(config.jobs[kind]))


def descendant_kinds(kinds, stages=BUILTIN_STAGES) -> set[str]:
    """Stage kinds reachable from ``kinds`` along the stage DAG, inclusive."""
    kind_of = {st.name: st.kind for st in stages}
    children: dict[str, set[str]] = {}
    for st in stages:
        for dep in st.depends_on:
            if dep in kind_of:
                children.setdefault(kind_of[dep], set()).add(st.kind)
    out = set(kinds)
    todo = list(kinds)
    while todo:
        for child in children.get(todo.pop(), ()):
            if child not in out:
                out.add(child)
                todo.append(child)
    return out


def apply_disable_controls(jobs: JobSet, labels, stages=BUILTIN_STAGES,
                           config: TriggerConfig = DEFAULT_CONFIG) -> JobSet:
    """Drop jobs excluded by disable labels, plus their DAG dependents."""
    removed: set[str] = set()
    lint_only = False
    ignored = []
    for label in sorted(labels):
        if label == LINT_ONLY_LABEL:
            lint_only = True
        elif label in DISABLE_LABELS:
            removed.update(DISABLE_LABELS[label])
        elif label != config.weekly_label:
            ignored.append(label)
    for label in ignored:
        log.warning("ignoring unrecognised label %r", label)
    gone = descendant_kinds(removed, stages)
    kept = {j for j in jobs.jobs if j.kind not in gone}
    if lint_only:
        kept = {j for j in kept if j.kind == "lint"}
    return JobSet(frozenset(kept), tuple(f"ignored label {lbl!r}" for lbl in ignored))


# ---------------------------------------------------------------------------
# Documents
# ---------------------------------------------------------------------------


def event_from_data(data) -> PipelineEvent:
    if not isinstance(data, dict):
        raise ConfigError("event document must be a mapping")
    allowed = {"kind", "target_branch", "labels", "variables", "commit_message_tags", "pinned_sha"}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"event: unknown keys {sorted(unknown)}")
    kind = data.get("kind")
    if kind not in EVENT_KINDS:
        raise ConfigError(f"event.kind: {kind!r} not in {EVENT_KINDS}")
    variables = {str(k): "" if v is None else str(v) for k, v in (data.get("variables") or {}).items()}
    if kind == "schedule" and "schedule_name" not in variables:
        raise ConfigError("event.variables: schedule events must carry schedule_name")
    return PipelineEvent(
        kind=kind,
        target_branch=str(data.get("target_branch", "main")),
        labels=frozenset(str(x) for x in data.get("labels") or ()),
        variables=variables,
        commit_message_tags=frozenset(str(x) for x in data.get("commit_message_tags") or ()),
        pinned_sha=data.get("pinned_sha"),
    )


def parse_event(text: str) -> PipelineEvent:
    return event_from_data(load_yaml(text))


_CONFIG_KEYS = {"main_branch", "torture_tag", "daily_variable", "weekly_label", "stability_variable", "jobs"}


def trigger_config_from_data(data) -> TriggerConfig:
    """Trigger config document: optional signal names plus ``jobs`` per kind.

    Jobs are written ``kind:variant``, e.g. ``fpga_test:fpga-daily``.
    """
    if not isinstance(data, dict):
        raise ConfigError("trigger config must be a mapping")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"trigger config: unknown keys {sorted(unknown)}")
    jobs = dict(DEFAULT_JOBS)
    for name, entries in (data.get("jobs") or {}).items():
        try:
            kind = TriggerKind(str(name).capitalize())
        except ValueError:
            raise ConfigError(f"trigger config: unknown trigger kind {name!r}") from None
        if kind == TriggerKind.NONE:
            raise ConfigError("trigger config: the none kind has no jobs")
        parsed = set()
        for entry in entries or ():
            stage_kind, sep, variant = str(entry).partition(":")
            if not sep or stage_kind not in STAGE_KINDS or not variant:
                raise ConfigError(f"trigger config: bad job {entry!r}; expected <stage kind>:<variant>")
            parsed.add(JobId(stage_kind, variant))
        jobs[kind] = frozenset(parsed)
    kwargs = {k: str(v) for k, v in data.items() if k != "jobs"}
    return TriggerConfig(jobs=jobs, **kwargs)


def parse_trigger_config(text: str) -> TriggerConfig:
    return trigger_config_from_data(load_yaml(text))


def emit_trigger_config(config: TriggerConfig) -> str:
    lines = [
        f"main_branch: {config.main_branch}",
        f"torture_tag: {config.torture_tag}",
        f"daily_variable: {config.daily_variable}",
        f"weekly_label: {config.weekly_label}",
        f"stability_variable: {config.stability_variable}",
        "jobs:",
    ]
    for kind in (TriggerKind.TORTURE, TriggerKind.DAILY, TriggerKind.WEEKLY, TriggerKind.STABILITY):
        entries = ", ".join(f'"{j}"' for j in sorted(config.jobs.get(kind, ()), key=_job_order))
        lines.append(f"  {kind.value.lower()}: [{entries}]")
    return "\n".join(lines) + "\n"


def stage_for_kind(kind: str, stages: tuple[StageSpec, ...]) -> StageSpec | None:
    for st in stages:
        if st.kind == kind:
            return st
    return None
