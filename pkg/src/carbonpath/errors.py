"""Exception hierarchy shared by every module.

Unknown data (an unlocatable hop, a zone with no trace) is represented as
``None`` and flows through reports; exceptions are reserved for conditions
the caller must handle: bad inputs, provider I/O failures, and sinks that
cannot be written.
"""


class CarbonPathError(Exception):
    """Base class for all toolkit errors."""


class EmptyPathError(CarbonPathError):
    """A path aggregate was requested for an empty hop list."""


class NoCoverageError(CarbonPathError):
    """A time window falls outside the coverage of a carbon series."""


class ProbeError(CarbonPathError):
    """Prober I/O failed (socket error, missing privilege, bad topology)."""


class ProviderError(CarbonPathError):
    """A geolocation or carbon provider failed to answer.

    Distinct from an Unknown result: Unknown flows into reports as a data
    gap, a ProviderError aborts the current sampling round.
    """


class ParseError(CarbonPathError):
    """A data file could not be parsed."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f" ({path}" + (f":{line}" if line is not None else "") + ")"
        super().__init__(message + where)


class SampleError(CarbonPathError):
    """A metrics source produced an unreadable or invariant-violating sample."""


class SinkError(CarbonPathError):
    """A record could not be appended to an output sink."""


class MonitorError(CarbonPathError):
    """The periodic path monitor hit a fatal condition (sink write failure)."""


class NoViableReplicaError(CarbonPathError):
    """Every replica candidate had an all-unknown path report."""


class NoViableFtnError(CarbonPathError):
    """Every file-transfer-node candidate had an all-unknown path report."""


class UndefinedScoreError(CarbonPathError):
    """Carbon score is undefined (zero carbon intensity or zero duration)."""


class SimulationTruncatedError(CarbonPathError):
    """Trace coverage ended while a simulated transfer was still running."""


class ConfigError(CarbonPathError):
    """The toolkit configuration file is invalid."""
