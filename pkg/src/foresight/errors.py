"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ForesightError(Exception):
    """Base class for every error raised by this package."""


# -- event graph ------------------------------------------------------------


class GraphError(ForesightError):
    """Structural violation in an event graph."""


class UnknownParent(GraphError):
    def __init__(self, parent_id: str):
        super().__init__(f"unknown parent id: {parent_id}")
        self.parent_id = parent_id


class EmptyDescription(GraphError):
    def __init__(self) -> None:
        super().__init__("event description must be non-empty")


class DuplicateId(GraphError):
    def __init__(self, event_id: str):
        super().__init__(f"duplicate event id: {event_id}")
        self.event_id = event_id


class NotFound(GraphError):
    def __init__(self, event_id: str):
        super().__init__(f"no such event: {event_id}")
        self.event_id = event_id


class IsRoot(GraphError):
    def __init__(self, event_id: str):
        super().__init__(f"operation not defined for the root event: {event_id}")
        self.event_id = event_id


# -- model gateway ----------------------------------------------------------


class GatewayError(ForesightError):
    """Transport or protocol failure while talking to a model backend."""


class Timeout(GatewayError):
    def __init__(self, detail: str = ""):
        super().__init__(f"request timed out{': ' + detail if detail else ''}")


class HttpStatusError(GatewayError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status


class ScriptMiss(GatewayError):
    def __init__(self, tag: str):
        super().__init__(f"no scripted reply for tag: {tag}")
        self.tag = tag


class MissingApiKey(GatewayError):
    def __init__(self, env_name: str):
        super().__init__(f"environment variable {env_name} is not set")
        self.env_name = env_name


class MalformedOutput(ForesightError):
    """Model output that does not satisfy the expected wire format.

    ``position`` is the offending element index, or the character offset for
    document-level syntax errors.
    """

    def __init__(self, position: int, reason: str):
        super().__init__(f"malformed output at {position}: {reason}")
        self.position = position
        self.reason = reason


# -- refinement and evaluation ----------------------------------------------


class EmptyRefinement(ForesightError):
    def __init__(self) -> None:
        super().__init__("refinement produced an empty response")


class JudgeUnparseable(ForesightError):
    def __init__(self, text: str):
        super().__init__(f"judge reply is not one of A, B, TIE: {text[:80]!r}")
        self.text = text


class ClassificationError(ForesightError):
    def __init__(self, record_id: str, detail: str):
        super().__init__(f"record {record_id}: {detail}")
        self.record_id = record_id


class NTooLarge(ForesightError):
    def __init__(self, n: int, size: int):
        super().__init__(f"cannot sample {n} records from a dataset of {size}")


class LengthMismatch(ForesightError):
    def __init__(self, a: int, b: int):
        super().__init__(f"prediction/gold length mismatch: {a} vs {b}")


class MissingLabel(ForesightError):
    def __init__(self, index: int):
        super().__init__(f"gold record at index {index} has no usable label")
        self.index = index


class EmptyInput(ForesightError):
    def __init__(self, what: str = "input"):
        super().__init__(f"{what} must be non-empty")


class NonFiniteInput(ForesightError):
    def __init__(self, field: str, value: float):
        super().__init__(f"{field} must be finite, got {value!r}")


class PipelineAborted(ForesightError):
    """A pipeline stage failed; carries whatever partial artifacts exist."""

    def __init__(self, message: str, *, graph=None, strata=None, rounds=None):
        super().__init__(message)
        self.graph = graph
        self.strata = list(strata) if strata is not None else []
        self.rounds = list(rounds) if rounds is not None else []
