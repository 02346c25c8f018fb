"""Exception hierarchy shared across the library."""


class SupctrlError(Exception):
    """Base class for all library errors."""


class DomainError(SupctrlError):
    """A state argument lies outside the diffusion's state interval."""


class UnsupportedModelError(SupctrlError):
    """The model violates a structural requirement (e.g. non-natural upper boundary)."""


class AssumptionViolationError(SupctrlError):
    """A verifiable standing assumption fails; the message names the condition."""


class NumericError(SupctrlError):
    """Quadrature, ODE integration, or root finding failed to converge."""


class IntegrabilityError(NumericError):
    """A resolvent integral diverges; the message names the violated side."""


class ConfigError(SupctrlError):
    """Malformed experiment configuration; the message is line-anchored."""
