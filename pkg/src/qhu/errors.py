"""Exception hierarchy shared by all qhu modules."""


class QhuError(Exception):
    """Base class for all qhu errors."""


class DimensionError(QhuError):
    """Operands have incompatible or invalid shapes."""


class NotQuasiHermitianError(QhuError):
    """Operator is not quasi-Hermitian with respect to the given metric
    (or its spectrum is complex beyond tolerance)."""


class DegenerateSpectrumError(QhuError):
    """Spectrum has a gap below the degeneracy threshold."""


class NotPositiveDefiniteError(QhuError):
    """Candidate metric is not Hermitian positive-definite."""


class DomainError(QhuError):
    """Scalar function is undefined at an eigenvalue."""


class ParamError(QhuError):
    """Model parameters violate a model precondition."""


class PTBrokenError(ParamError):
    """PT model called outside the quasi-Hermitian regime (a^2 <= b^2)."""


class GaugeJumpError(QhuError):
    """Finite difference of sqrt(rho) blew up, indicating a discontinuity
    along the parameter path."""


class NearSingularError(QhuError):
    """An off-diagonal population denominator p_i + p_j is numerically zero."""


class ConvergenceError(QhuError):
    """Holonomy failed to converge within the step budget."""


class IllDefinedPhaseError(QhuError):
    """|G| is below threshold: the Uhlmann phase is ill-defined (critical point)."""


class NotRealAmplitudeError(QhuError):
    """Amplitude has an imaginary part beyond tolerance where a real one is required."""


class GaugeError(QhuError):
    """Purification gauge is not quasi-unitary within tolerance."""


class MetricMismatchError(QhuError):
    """Two purified states carry different metrics."""


class ParseError(QhuError):
    """Config document is syntactically malformed."""


class ValidationError(QhuError):
    """Config document is well-formed but semantically invalid."""


class IoError(QhuError):
    """Output path cannot be written."""
