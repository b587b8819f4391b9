"""Exception hierarchy shared by all crossimpact modules."""


class CrossImpactError(Exception):
    """Base class for every error raised by this package."""


class InvalidSpec(CrossImpactError, ValueError):
    """A propagator specification violates its construction invariants."""


class InvalidParameters(CrossImpactError, ValueError):
    """Market, signal or grid parameters are inconsistent."""


class SingularityAtDiagonal(CrossImpactError, ValueError):
    """A singular kernel was evaluated on the diagonal ``t == s``."""


class QuadratureFailure(CrossImpactError, RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


class EigenFailure(CrossImpactError, RuntimeError):
    """The symmetric eigensolver did not converge."""


class GridMismatch(CrossImpactError, ValueError):
    """An array does not match the time grid it is used with."""


class DimensionMismatch(CrossImpactError, ValueError):
    """Matrix dimensions disagree with the number of assets."""


class IndexOutOfRange(CrossImpactError, IndexError):
    """A grid index lies outside its admissible range."""


class WrongKind(CrossImpactError, TypeError):
    """An operation was applied to a model of the wrong kind."""


class TimeOrder(CrossImpactError, ValueError):
    """Times were supplied in the wrong order."""


class SingularSystem(CrossImpactError, RuntimeError):
    """A linear system could not be factorized."""


class InadmissibleKernel(CrossImpactError, RuntimeError):
    """The propagator could not be certified free of price manipulation."""


class PathMismatch(CrossImpactError, ValueError):
    """A signal path is inconsistent with the grid or signal model."""


class SingularSigma(CrossImpactError, ValueError):
    """The covariance matrix is not invertible."""


class ZeroGamma(CrossImpactError, ValueError):
    """Risk aversion must be strictly positive for this operation."""


class ConfigParse(CrossImpactError, ValueError):
    """A scenario configuration could not be parsed or validated."""
