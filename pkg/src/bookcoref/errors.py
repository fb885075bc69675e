"""Exception taxonomy shared by all modules.

Contract and validation failures map to CLI exit code 1, input/parse
failures to exit code 2.
"""


class BookcorefError(Exception):
    """Base class for all toolkit errors."""


class SpanRangeError(BookcorefError):
    """A span or token range violates its bounds invariant."""


class CompositionError(BookcorefError):
    """Cluster sets from different documents or stages were combined."""


class StageError(BookcorefError):
    """A pipeline stage received input in the wrong stage or failed mid-run."""


class ContractError(BookcorefError):
    """A pluggable component violated its interface contract."""


class PlanningError(BookcorefError):
    """A window plan cannot satisfy its boundary rule."""


class ConfigError(BookcorefError):
    """Invalid configuration value or combination."""


class ParseError(BookcorefError):
    """Malformed input file; carries the offending line/row number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(BookcorefError):
    """Input parsed but does not match the expected record schema."""


class TransportError(BookcorefError):
    """A remote annotator service could not be reached after retries."""
