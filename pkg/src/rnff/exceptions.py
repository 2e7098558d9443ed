"""Exception hierarchy shared by the library and the command line."""


class ValidationError(ValueError):
    """Malformed input: wrong shapes, non-finite values, out-of-range parameters."""


class CapabilityError(RuntimeError):
    """The request is well formed but the routine cannot serve it."""


class BudgetExceededError(CapabilityError):
    """Exact enumeration would exceed its leaf budget."""


class InadmissibleConstantsError(CapabilityError):
    """Bound verification was asked to run with rho >= 1."""
