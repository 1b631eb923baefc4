"""Exception hierarchy shared by the library and the command-line front end."""


class DecoderError(Exception):
    """Base class for every error raised by this package."""

    kind = "error"
    exit_code = 1


class ShapeError(DecoderError, ValueError):
    """Array dimensions or index ranges do not agree."""

    kind = "shape"
    exit_code = 3


class ParseError(DecoderError, ValueError):
    """A text file (CSV, config, manifest) could not be parsed."""

    kind = "parse"
    exit_code = 3


class CheckpointError(DecoderError, ValueError):
    """A binary checkpoint has a bad magic, version or layout."""

    kind = "checkpoint"
    exit_code = 3


class NumericError(DecoderError, ArithmeticError):
    """A computation produced (or was fed) non-finite values."""

    kind = "numeric"
    exit_code = 4


class ConfigError(DecoderError, ValueError):
    """A configuration value violates its documented constraints."""

    kind = "config"
    exit_code = 2
