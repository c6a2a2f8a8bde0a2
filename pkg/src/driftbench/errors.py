"""Toolkit-wide exception types."""


class ValidationError(ValueError):
    """Raised when an input file or in-memory value violates a schema invariant.

    The message always identifies the offending record (line number,
    frame_id, or byte offset) so failures are traceable to the input.
    """


class UsageError(Exception):
    """Raised for bad command-line invocations (maps to exit code 1)."""
