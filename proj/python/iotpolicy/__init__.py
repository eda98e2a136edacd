"""Device network policies: learn, compile, replay and summarize."""

from ._core import (
    EmptyCapture,
    FormatError,
    IoError,
    JoinError,
    Policy,
    PolicyError,
    generate_trace,
    learn,
    profiles,
    summarize,
)

__all__ = [
    "EmptyCapture",
    "FormatError",
    "IoError",
    "JoinError",
    "Policy",
    "PolicyError",
    "generate_trace",
    "learn",
    "profiles",
    "summarize",
]
