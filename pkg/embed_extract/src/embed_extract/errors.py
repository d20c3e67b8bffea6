"""Error types for the extraction tool.

Every failure the tool raises on purpose derives from ExtractError, so
callers (and the CLI) can catch one base class and map subtypes to exit
codes.
"""


class ExtractError(Exception):
    """Base class for all extraction failures."""


class ConfigError(ExtractError):
    """A job parameter is out of range or inconsistent."""


class UnreadableFileError(ExtractError):
    """An input path cannot be read or decoded as UTF-8 text."""


class EmptyInputDirError(ExtractError):
    """The input directory contains no regular files."""


class ModelLoadError(ExtractError):
    """The named embedding model cannot be loaded."""
