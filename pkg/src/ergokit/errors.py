"""Shared exception types and warning categories."""


class ErgokitError(Exception):
    """Base class for all library errors."""


class MapSyntaxError(ErgokitError):
    """Raised when a map expression cannot be parsed.

    ``position`` is the 1-based byte offset of the offending token
    (``len(text) + 1`` when the input ends unexpectedly).
    """

    def __init__(self, message, position):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class UnknownIdentifierError(ErgokitError):
    """An identifier was used as a function but is not a known function."""

    def __init__(self, name, position):
        super().__init__(f"unknown function '{name}' (at offset {position})")
        self.name = name
        self.position = position


class UnboundParameterError(ErgokitError):
    """An expression parameter has no value bound at evaluation time."""

    def __init__(self, name):
        super().__init__(f"parameter '{name}' is not bound")
        self.name = name


class DomainError(ErgokitError):
    """A map evaluation left [0, 1] (with clamping disabled) or was non-finite."""


class DimensionMismatchError(ErgokitError):
    """Operands have incompatible dimensions or representations."""


class NotConvergedError(ErgokitError):
    """An iterative solver hit its iteration cap.

    ``residual`` carries the last residual (or optimality slack) observed.
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NotMixingError(ErgokitError):
    """The chain does not contract to a single stationary distribution."""


class ResolutionTooCoarseError(ErgokitError):
    """A density's stored discretization bound exceeds the query budget."""


class PowerTooSmallError(ErgokitError):
    """Target power is below the threshold where the polynomial route applies."""

    def __init__(self, t, t_min):
        super().__init__(
            f"PowerTooSmall: T={t} is below T_min={t_min}; "
            "use power_by_squaring for small powers"
        )
        self.t = t
        self.t_min = t_min


class CertificateFailedError(ErgokitError):
    """The sampled scalar certificate of a power polynomial failed."""


class SingularIntegrandError(ErgokitError):
    """|T'| vanishes on a set of positive mass, so ln|T'| is not integrable."""


class SmoothnessWarning(UserWarning):
    """The map looks discontinuous where a smooth-map pipeline was requested."""
