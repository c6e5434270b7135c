"""Exception hierarchy shared by every module."""


class LoopcatError(Exception):
    """Base class for numeric and model failures."""


class DomainError(LoopcatError, ValueError):
    """A parameter lies outside its physical range."""


class ArityError(LoopcatError, ValueError):
    """Operation called on a state with the wrong number of modes."""


class DimensionError(LoopcatError, ValueError):
    pass


class TruncationError(LoopcatError):
    """Photon-number cutoff too small for the requested state."""

    def __init__(self, tail_mass, message=None):
        self.tail_mass = float(tail_mass)
        super().__init__(message or f"Fock truncation inadequate: tail mass {self.tail_mass:.3e}")


class DegenerateFilterError(DomainError):
    pass


class SupportError(LoopcatError):
    """A mode function does not fit on its time grid."""


class GridMismatchError(LoopcatError, ValueError):
    pass


class PreconditionError(LoopcatError, ValueError):
    pass


class RankDeficiencyError(LoopcatError):
    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"seed mode {index} is linearly dependent on the previous ones")


class AmbiguityError(LoopcatError):
    """No single dominant mode in an autocorrelation spectrum."""


class UnidentifiableStateError(LoopcatError):
    pass


class ObjectiveError(LoopcatError):
    def __init__(self, params, value):
        self.params = tuple(params)
        self.value = value
        super().__init__(f"objective returned {value!r} at parameters {self.params}")


class FitRankError(LoopcatError):
    pass


class BootstrapError(LoopcatError):
    pass


class ConfigError(LoopcatError, ValueError):
    """Bad configuration or input file; maps to CLI exit code 2."""
