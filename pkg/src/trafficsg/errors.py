"""Exception hierarchy shared by every trafficsg module."""

from __future__ import annotations


class TrafficSGError(Exception):
    """Base class for all package errors."""


# graph store


class GraphError(TrafficSGError):
    pass


class DuplicateFrame(GraphError):
    pass


class NonMonotonicTimestamp(GraphError):
    pass


class DuplicateObservation(GraphError):
    pass


class DuplicateInstance(GraphError):
    pass


class DuplicateLane(GraphError):
    pass


class DegeneratePolyline(GraphError):
    pass


class InvalidBBox(GraphError, ValueError):
    pass


class GraphIntegrityError(GraphError):
    """Raised when a freshly built graph fails validation."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        head = "; ".join(self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        super().__init__(f"graph failed validation: {head}{more}")


class SinkError(GraphError):
    pass


class SnapshotError(GraphError):
    pass


# lookups used by tools


class LookupFailure(TrafficSGError, LookupError):
    pass


class UnknownFrame(LookupFailure):
    pass


class UnknownTrack(LookupFailure):
    pass


class UnknownObservation(LookupFailure):
    pass


class NoMatch(LookupFailure):
    pass


class ImageUnavailable(LookupFailure):
    pass


# geometry


class GeometryError(TrafficSGError):
    pass


class HorizonDegenerate(GeometryError):
    pass


class CalibrationDegenerate(GeometryError):
    pass


# ingest


class IngestError(TrafficSGError):
    pass


class FormatError(IngestError):
    """Malformed input. ``problems`` holds ``(line_number, message)`` pairs."""

    def __init__(self, problems: list[tuple[int, str]] | str, source: str = "input"):
        if isinstance(problems, str):
            problems = [(0, problems)]
        self.problems = list(problems)
        self.source = source
        lines = [f"line {n}: {msg}" if n else msg for n, msg in self.problems]
        super().__init__(f"{source}: " + "; ".join(lines))


class UnknownType(IngestError):
    pass


class UnknownHierarchy(IngestError):
    pass


class MixedVideoIds(IngestError):
    pass


# agent / backends


class BackendError(TrafficSGError):
    pass


class ConfigError(TrafficSGError):
    pass


class ParseFailure(TrafficSGError):
    """A model reply that does not follow the transcript grammar."""

    def __init__(self, diagnostic: str, reply: str = ""):
        self.diagnostic = diagnostic
        self.reply = reply
        super().__init__(diagnostic)


# evaluation


class EvaluationError(TrafficSGError):
    pass


class DuplicatePrediction(EvaluationError):
    pass


class UnknownQuestion(EvaluationError):
    pass
