"""Online sparse identification with a square-root augmented UKF and ARD."""

from .errors import (
    ConfigError,
    Diverged,
    DowndateBreaksSPD,
    InvalidHyper,
    NonFinite,
    NotPositiveDefinite,
    RankDeficient,
    SingularM,
    SkiError,
    TooFewSamples,
)

__all__ = [
    "ConfigError", "Diverged", "DowndateBreaksSPD", "InvalidHyper", "NonFinite",
    "NotPositiveDefinite", "RankDeficient", "SingularM", "SkiError", "TooFewSamples",
]
__version__ = "0.1.0"
