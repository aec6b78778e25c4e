"""Shared exception types.

Input validation failures raise plain ValueError; these classes cover the
two other failure families the library distinguishes.
"""


class NumericsError(RuntimeError):
    """A numerical procedure failed (factorization, divergence, non-finite values)."""


class StateError(RuntimeError):
    """A stateful contract was violated (time mismatch, stale snapshot, basis-tag mismatch)."""
