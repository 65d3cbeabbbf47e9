"""
Wirebench Errors
Exception hierarchy shared by every module; the CLI maps these to exit codes.
"""
from typing import Iterable, Optional, Union


class WirebenchError(Exception):
    """Base class for every error raised by wirebench."""


class ConfigurationError(WirebenchError, ValueError):
    """One or more configuration invariants are violated."""

    def __init__(self, problems: Union[str, Iterable[str]]):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class SizeParseError(ConfigurationError):
    """A size string such as '4K' could not be parsed."""


class ResultsError(WirebenchError):
    """A persisted results file is malformed."""


# === Transport ===

class TransportError(WirebenchError):
    """The byte channel failed (refused, reset, timed out, closed)."""


class HandshakeError(TransportError):
    """The peer's parameter frame was rejected."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class TruncationError(TransportError):
    """EOF arrived before the requested number of bytes."""

    def __init__(self, expected: int, received: int, partial: bytes = b""):
        super().__init__(f"connection closed after {received} of {expected} bytes")
        self.expected = expected
        self.received = received
        self.partial = partial


class ProtocolError(WirebenchError):
    """The peer followed the benchmark script incorrectly (bad echo, bad token)."""


# === Simulated verbs ===

class VerbsError(WirebenchError):
    """Base class for simulated verbs failures."""


class QueueFullError(VerbsError):
    """A post would exceed the queue capacity."""


class InvalidWorkRequest(VerbsError):
    """A work request is malformed or posted to the wrong queue."""


class CompletionError(VerbsError):
    """A work completion carried an error status."""

    def __init__(self, completion, index: Optional[int] = None):
        where = f" at message {index}" if index is not None else ""
        super().__init__(
            f"work request {completion.request_id} completed with {completion.status.value}{where}"
        )
        self.completion = completion
        self.index = index


class UnknownCounterError(VerbsError, KeyError):
    """Counter name not present in the CounterSet."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class SimulationStalled(VerbsError):
    """No task can make progress and the fabric has nothing scheduled."""


# === Analysis ===

class StatsError(WirebenchError, ValueError):
    """Statistics requested over invalid input."""


class AccountingError(WirebenchError, ValueError):
    """Wire-byte accounting is inconsistent or undefined."""


class PlotError(WirebenchError):
    """A plot cannot be rendered from the given data."""
