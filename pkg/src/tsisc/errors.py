"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value; ``field`` names the offending parameter."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class StreamFormatError(ValueError):
    """Malformed event file. ``location`` is a 1-based line (CSV) or byte offset (binary)."""

    def __init__(self, message, location=None):
        if location is not None:
            message = f"{message} (at {location})"
        super().__init__(message)
        self.location = location


class StreamOrderError(StreamFormatError):
    pass


class BoundsError(ValueError):
    pass


class ClockError(ValueError):
    """A query or write went backwards in time."""


class FitError(RuntimeError):
    """Nonlinear fit did not converge; ``best`` holds the best-so-far model."""

    def __init__(self, message, best=None, mse=None):
        super().__init__(message)
        self.best = best
        self.mse = mse
