"""Exception types shared across the library."""


class InvalidArgumentError(ValueError):
    """A caller-supplied argument violates an operation's precondition."""


class StateError(RuntimeError):
    """An operation was called in the wrong order (e.g. backward before forward)."""


class ConfigurationError(ValueError):
    """A model or experiment configuration is inconsistent."""


class FormatError(ValueError):
    """A file's contents do not match the expected binary or JSON format."""


class DatasetIOError(OSError):
    """A dataset file is missing or truncated; the message names the file."""
