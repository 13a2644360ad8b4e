"""Exception hierarchy shared across the package."""


class GridscribeError(Exception):
    """Base class for all package-specific errors."""


class InvalidEncodingError(GridscribeError):
    """Source file is not valid UTF-8."""


class KindMismatchError(GridscribeError, ValueError):
    """Operation received a source document of the wrong kind."""


class InvalidParamsError(GridscribeError, ValueError):
    """Numeric parameters outside their allowed range."""


class EmptyRequestError(GridscribeError, ValueError):
    """User request is empty after trimming."""


class StoreMissingError(GridscribeError):
    """Retrieval mode requires a store that was not provided."""


class BackendUnavailableError(GridscribeError):
    """Remote or local backend cannot be reached."""


class AuthError(GridscribeError):
    """Backend rejected the configured credentials."""


class MockExhaustedError(GridscribeError):
    """Scripted mock was asked for more responses than it holds."""


class ParseError(GridscribeError, ValueError):
    """A fixture or config file does not match its schema."""


class DimMismatchError(GridscribeError, ValueError):
    """Query vector dimension differs from the index dimension."""


class CorruptIndexError(GridscribeError):
    """Persisted index file failed its magic/length checks."""


class EmptyOutputError(GridscribeError):
    """Completion contained no code after extraction."""


class ConfigError(GridscribeError):
    """Agent configuration cannot be satisfied by the provided deps."""


class DomainError(GridscribeError, ValueError):
    """Metric arguments violate their documented domain."""


class NoResultError(GridscribeError):
    """Worker output stream ended without a sentinel line."""


class MalformedPacketError(GridscribeError):
    """Sentinel line was found but its JSON payload is invalid."""


class SpawnError(GridscribeError):
    """Worker process could not be started."""


class BusyError(GridscribeError):
    """Concurrent-worker limit reached."""
