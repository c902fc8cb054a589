"""Fixed-point duration helpers.

All durations inside fleetreg are integer deciseconds so that sums, plans and
reports are exact and byte-stable.  Conversion to and from decimal seconds
happens only at document boundaries.
"""

from __future__ import annotations

import math
import re

DS_PER_SECOND = 10


def seconds_to_ds(value) -> int:
    """Convert decimal seconds (int/float/str) to deciseconds.

    Raises ``ValueError`` if the value has more than one fractional digit or is
    not a finite number.
    """
    if isinstance(value, bool):
        raise ValueError(f"not a duration: {value!r}")
    if isinstance(value, str):
        value = float(value)
    if not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValueError(f"not a duration: {value!r}")
    scaled = value * DS_PER_SECOND
    ds = round(scaled)
    if abs(scaled - ds) > 1e-6:
        raise ValueError(f"{value!r} has more than one fractional digit")
    return int(ds)


def ds_to_seconds(ds: int) -> float:
    return ds / DS_PER_SECOND


def format_ds(ds: int) -> str:
    """Render deciseconds as decimal seconds: ``655 -> '65.5'``, ``1320 -> '132'``."""
    sign = "-" if ds < 0 else ""
    whole, frac = divmod(abs(ds), DS_PER_SECOND)
    return f"{sign}{whole}" if frac == 0 else f"{sign}{whole}.{frac}"


def ds_scalar(ds: int) -> int | float:
    """Deciseconds as the plain YAML/JSON number ``format_ds`` would print."""
    return ds // DS_PER_SECOND if ds % DS_PER_SECOND == 0 else ds / DS_PER_SECOND


def prorate(total_ds: int, part: int, whole: int) -> int:
    """Round-half-up of ``total_ds * part / whole`` in integer arithmetic."""
    return (2 * total_ds * part + whole) // (2 * whole)


_WINDOW_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*([smhdw]?)\s*$")
_WINDOW_UNITS = {"s": 1 / 86400, "m": 1 / 1440, "h": 1 / 24, "d": 1.0, "w": 7.0, "": 1.0}


def parse_window_days(text: str) -> float:
    """Parse ``'21d'``, ``'3w'``, ``'12h'`` or a bare number of days."""
    m = _WINDOW_RE.match(str(text))
    if not m:
        raise ValueError(f"bad window {text!r}; expected e.g. 21d, 3w, 12h")
    return float(m.group(1)) * _WINDOW_UNITS[m.group(2)]
