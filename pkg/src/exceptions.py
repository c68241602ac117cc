"""Exception hierarchy shared by the physics modules and the batch front end."""

from typing import Optional


class PilError(Exception):
    """Base class for every error raised by this package."""


class InputValidationError(PilError, ValueError):
    """Raised for malformed inputs (non-Hermitian H0, dt <= 0, dimension mismatch, ...)."""


class PathBudgetExceededError(PilError):
    """Raised when a dense path sum would need more path states than allowed."""

    def __init__(self, dim: int, mem_len: int, path_states: int, budget: int):
        self.dim = dim
        self.mem_len = mem_len
        self.path_states = path_states
        self.budget = budget
        super().__init__(
            f"Dense path sum for d={dim}, L={mem_len} needs (d^2)^(L+1) = {path_states} "
            f"path states, above the budget of {budget}. Reduce mem_len, use fewer "
            f"sites, or raise the budget with --budget / PIL_PATH_BUDGET."
        )


class NumericalError(PilError, ArithmeticError):
    """Raised when a numerical procedure fails to meet its accuracy target."""


class QuadratureError(NumericalError):
    """Raised when adaptive quadrature does not converge within tolerance.

    Carries the achieved estimate and its error bound so callers can decide
    whether the value is still usable.
    """

    def __init__(self, message: str, estimate: complex, abserr: Optional[float] = None):
        self.estimate = estimate
        self.abserr = abserr
        super().__init__(f"{message} (estimate={estimate!r}, abserr={abserr!r})")


class CacheError(PilError):
    """Raised for unreadable or inconsistent cache entries."""
