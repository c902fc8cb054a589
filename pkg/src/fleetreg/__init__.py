"""Regression orchestration for multi-device FPGA emulation farms."""

from fleetreg.manifest import builtin_bzl_manifest, parse_manifest, validate_manifest

__version__ = "0.1.0"

__all__ = ["builtin_bzl_manifest", "parse_manifest", "validate_manifest", "__version__"]
