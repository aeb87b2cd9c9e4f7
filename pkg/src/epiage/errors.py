"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid grid, rate, or scenario configuration."""


class SolverError(RuntimeError):
    """A linear solve or iteration failed to reach its contract."""


class StepSizeError(RuntimeError):
    """The time/age step is too coarse for the implicit renewal solve."""
