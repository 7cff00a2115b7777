"""Shared exception types."""


class ConfigError(Exception):
    """Invalid or incomplete run configuration (CLI exit code 2)."""


class StageError(Exception):
    """A pipeline stage failed while processing valid configuration (CLI exit code 1)."""
