"""Exception hierarchy shared by every fleetreg module.

The CLI maps these classes onto its exit codes: ``ConfigError`` (and
subclasses) is a usage/config problem, ``FleetregError`` anything else is a
runtime failure.
"""

from __future__ import annotations


class FleetregError(Exception):
    """Base class for all fleetreg errors."""


class ConfigError(FleetregError):
    """Bad input document: syntax, schema or version problem."""


class ManifestSyntaxError(ConfigError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"syntax error{where}: {message}")


class SchemaError(ConfigError):
    """One or more schema violations; ``violations`` holds (path, reason) data."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = [f"{v.path}: {v.reason} [{v.code}]" for v in self.violations]
        super().__init__("schema violation:\n  " + "\n  ".join(lines))


class VersionMismatchError(ConfigError):
    def __init__(self, found, supported: int):
        self.found = found
        self.supported = supported
        super().__init__(f"unsupported schema_version {found!r} (supported: {supported})")


class IllegalTransitionError(FleetregError):
    def __init__(self, device, state, event):
        self.device = device
        self.state = state
        self.event = event
        super().__init__(f"illegal transition on {device}: {state} + {event}")


class UnknownDeviceError(FleetregError):
    pass


class InsufficientCapacityError(FleetregError):
    def __init__(self, requested: int, available: int):
        self.requested = requested
        self.available = available
        super().__init__(f"insufficient capacity: requested {requested}, available {available}")


class SchedulingError(FleetregError):
    pass


class DeviceUnavailableError(FleetregError):
    pass


class RunnerCrash(FleetregError):
    """Raised by a runner when the device (or the harness driving it) dies."""


class TraceMismatchError(FleetregError):
    pass
