"""Exception types shared across the package."""


class MissSizeError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MissSizeError):
    """Invalid or inconsistent configuration / inputs."""


class CalibrationError(MissSizeError):
    """Intercept calibration could not bracket the target prevalence."""


class SizingError(MissSizeError):
    """Closed-form sizing criteria are undefined for the given inputs."""


class DegenerateDataError(MissSizeError):
    """Data are unusable for the requested operation (single-class outcome,
    no complete rows, constant predictions, ...)."""


class FitError(MissSizeError):
    """A model fit failed structurally (rank deficiency, usage error)."""
