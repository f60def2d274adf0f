"""Exception types shared across the package.

Everything derives from QmirrorError so callers can catch the whole family
with one clause.  Names follow the physical failure they signal, not the
module that raises them.
"""

__all__ = [
    "QmirrorError",
    "PhaseMatchImpossible",
    "OutOfDispersionRange",
    "FrequencyOrder",
    "StepTooLarge",
    "CollimatedOutput",
    "NoExitAngle",
    "DegenerateConjugate",
    "DegenerateTriangle",
    "RayBlocked",
    "GammaOutOfRange",
    "NoFringes",
    "InsufficientCounts",
    "ConfigInvalid",
    "ParseError",
    "ValidationError",
    "IoError",
]


class QmirrorError(Exception):
    """Base class for all package errors."""


class PhaseMatchImpossible(QmirrorError):
    """Wavevector magnitudes cannot close a momentum triangle."""


class OutOfDispersionRange(QmirrorError):
    """Frequency lies outside the tabulated dispersion window."""


class FrequencyOrder(QmirrorError):
    """A daughter frequency is not strictly below its pump frequency."""


class StepTooLarge(QmirrorError):
    """Integration step exceeds the resolution floor for the slab length."""


class CollimatedOutput(QmirrorError):
    """Object sits in the focal plane; the image distance diverges."""


class NoExitAngle(QmirrorError):
    """The frequency-scaled sine exceeds one; no real exit direction."""


class DegenerateConjugate(QmirrorError):
    """Conjugate-distance denominator vanished; image at infinity."""


class DegenerateTriangle(QmirrorError):
    """A triangle in the area identity collapsed below the area floor."""


class RayBlocked(QmirrorError):
    """Ray hit an opaque mask cell."""


class GammaOutOfRange(QmirrorError):
    """Mutual coherence degree must lie in [0, 1]."""


class NoFringes(QmirrorError):
    """Pattern window contains no interior extrema to measure."""


class InsufficientCounts(QmirrorError):
    """Histogram too sparse for a meaningful chi-square test."""


class ConfigInvalid(QmirrorError):
    """Experiment configuration is structurally unusable."""


class ParseError(ConfigInvalid):
    """Config or table text could not be parsed."""


class ValidationError(ConfigInvalid):
    """Config parsed but failed schema validation."""


class IoError(QmirrorError):
    """Output could not be written."""
