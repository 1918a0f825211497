"""Exception types raised by the evratio modules."""


class EvRatioError(Exception):
    """Base class for all library errors."""


class UndefinedOperatingPointError(EvRatioError, ValueError):
    """Efficiency requested at a zero-power operating point."""


class NegativeBetaError(EvRatioError, ValueError):
    pass


class NoInteriorMaximumError(EvRatioError):
    """The optimal-operation-line efficiency has no interior maximum."""


class SingularSystemError(EvRatioError, ValueError):
    pass


class InfeasibleDesignPointError(EvRatioError, ValueError):
    """Design points yield coefficients outside the admissible model family."""


class NoFeasibleCandidateError(EvRatioError):
    pass


class ClosedFormDegenerateError(EvRatioError, ArithmeticError):
    """Closed-form ratio failed its residual or imaginary-part validation."""


class NoPositiveRootError(EvRatioError, ArithmeticError):
    pass


class EnvelopeViolationError(EvRatioError):
    pass


class MapFormatError(EvRatioError, ValueError):
    """Malformed efficiency-map or drive-cycle file."""


class ZeroEnergyError(EvRatioError, ValueError):
    pass
