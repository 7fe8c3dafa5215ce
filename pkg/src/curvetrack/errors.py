"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class CurveTrackError(Exception):
    exit_code = 1


class ParameterError(CurveTrackError, ValueError):
    """Invalid argument values or inconsistent shapes."""

    exit_code = 2


class ConfigError(ParameterError):
    exit_code = 2


class DegenerateInputError(CurveTrackError, ValueError):
    """Input carries no usable structure (uniform mask, no sign change, empty band)."""

    exit_code = 3


class FilterDegeneracyError(DegenerateInputError):
    def __init__(self, frame, max_log_likelihood):
        super().__init__(
            f"all particle weights vanished at frame {frame} "
            f"(max log-likelihood {max_log_likelihood!r})"
        )
        self.frame = frame
        self.max_log_likelihood = max_log_likelihood


class StepError(ParameterError):
    """Time step violates the displacement bound of the advection scheme."""

    exit_code = 2


class DecodeError(CurveTrackError, OSError):
    exit_code = 4
