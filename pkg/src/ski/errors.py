"""Exception hierarchy shared by the kernels, filters and the ARD engine."""


class SkiError(Exception):
    """Base class for all library errors."""


class NotPositiveDefinite(SkiError):
    """A matrix expected to be symmetric positive definite is not."""


class DowndateBreaksSPD(SkiError):
    """A Cholesky downdate would produce a non-positive pivot."""


class RankDeficient(SkiError):
    """A QR factorization hit a (numerically) zero diagonal."""


class NonFinite(SkiError):
    """A model function returned NaN or Inf."""


class InvalidHyper(SkiError, ValueError):
    """A filter or ARD hyperparameter is outside its admissible range."""


class SingularM(SkiError):
    """The ARD log-determinant argument is not positive (inadmissible proposal)."""


class TooFewSamples(SkiError, ValueError):
    pass


class Diverged(SkiError):
    """A closed-loop simulation left its admissible envelope."""


class ConfigError(SkiError, ValueError):
    pass
