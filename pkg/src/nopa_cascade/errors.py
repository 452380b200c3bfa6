"""Exception hierarchy shared by the simulator modules."""


class NopaCascadeError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(NopaCascadeError, ValueError):
    """An object or argument violates its documented invariants."""


class InconsistentGeometryError(ValidationError):
    """Cavity finesse and coupler transmission cannot describe the same cavity."""


class AboveThresholdError(ValidationError):
    """Pump above the oscillation threshold; the linearized model does not apply."""


class ConfigError(NopaCascadeError):
    """Malformed or semantically invalid configuration text.

    ``line`` is set for syntax errors, ``key_path`` for semantic ones.
    """

    def __init__(self, message, *, line=None, key_path=None):
        self.line = line
        self.key_path = key_path
        prefix = ""
        if line is not None:
            prefix = f"line {line}: "
        elif key_path is not None:
            prefix = f"{key_path}: "
        super().__init__(prefix + message)


class SimulationConfigError(ValidationError):
    """A stochastic simulation run is misconfigured (step too coarse, too short, unstable)."""


class OutputError(NopaCascadeError, OSError):
    """Writing a result file failed; the message carries the path."""
