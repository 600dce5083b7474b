"""Python interface to the greenrt runtime kernel."""

from ._greenrt import (
    Error,
    Program,
    audit_trace,
    config_text,
    load_program,
    load_program_file,
    probe_constants,
    run,
)

__all__ = [
    "Error",
    "Program",
    "audit_trace",
    "config_text",
    "load_program",
    "load_program_file",
    "probe_constants",
    "run",
]
