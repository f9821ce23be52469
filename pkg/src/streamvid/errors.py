"""Error categories shared across modules and mapped to CLI exit codes."""


class ConfigurationError(ValueError):
    """Invalid configuration (exit code 2)."""


class PreconditionError(RuntimeError):
    """Missing prerequisite artifact such as a dataset or checkpoint (exit code 3)."""
