"""Exception hierarchy shared by every fedbench subsystem."""

from __future__ import annotations


class FedBenchError(Exception):
    """Base class for all toolkit errors."""


# scenario
class UnknownScenario(FedBenchError):
    pass


class ChecksumMismatch(FedBenchError):
    pass


class FetchFailure(FedBenchError):
    pass


class InvalidSpec(FedBenchError):
    pass


class NoCommonIds(FedBenchError):
    pass


class LengthMismatch(FedBenchError):
    pass


class DegenerateAUC(FedBenchError):
    pass


# engine
class NonFiniteLoss(FedBenchError):
    pass


class ShapeMismatch(FedBenchError):
    pass


class EmptyUpdateSet(FedBenchError):
    pass


class InvalidK(FedBenchError):
    pass


class EdgeMismatch(FedBenchError):
    pass


class AlignmentError(FedBenchError):
    pass


# transport
class TransportError(FedBenchError):
    pass


class BindFailure(TransportError):
    pass


class ConnectTimeout(TransportError):
    pass


class VersionMismatch(TransportError):
    pass


class PeerClosed(TransportError):
    pass


class FrameTooLarge(TransportError):
    pass


class MalformedHeader(TransportError):
    pass


# eventlog
class IoFailure(FedBenchError):
    pass


class MalformedLine(FedBenchError):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


# orchestrator
class ParseError(FedBenchError):
    pass


class IncompatibleCombination(FedBenchError):
    pass


class UnknownEngine(FedBenchError):
    pass


class SpawnFailure(FedBenchError):
    pass


class HostUnreachable(FedBenchError):
    pass


class PortConflict(FedBenchError):
    pass


class ProcessGone(FedBenchError):
    pass


class RunFailed(FedBenchError):
    """A party exited abnormally; the partial logs were still collected."""


class MissingLog(FedBenchError):
    pass


# analyzer
class CorruptLog(FedBenchError):
    pass


class MissingAggregatorLog(FedBenchError):
    pass


class IncomparableScenarios(FedBenchError):
    pass


# advisor
class SchemaError(FedBenchError):
    pass


class NoMatch(FedBenchError):
    def __init__(self, message: str, trace: list[str]):
        super().__init__(message)
        self.trace = trace
