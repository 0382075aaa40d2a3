"""Shared exception types."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ContractError(ValueError):
    """An API precondition was violated (e.g. non-scalar backward seed)."""


class FactorizationError(ArithmeticError):
    """A matrix factorization failed; the message names the offending eigenvalue."""


class DegenerateBatchError(ValueError):
    """A batch statistic that needs at least two samples got fewer."""


class UndefinedInformationError(ValueError):
    """An information quantity is undefined for the given parameters (e.g. zero noise)."""


class DivergenceError(RuntimeError):
    """A simulation or training run produced non-finite state.

    Attributes
    ----------
    step : int or None
        Index of the step at which divergence was detected, when known.
    trajectory : list
        Step records collected before the failure (may be empty).
    """

    def __init__(self, message: str, step: int | None = None, trajectory=None):
        super().__init__(message)
        self.step = step
        self.trajectory = trajectory if trajectory is not None else []


class ConfigError(ValueError):
    """A configuration file or flag failed validation; the message names the key."""


class StabilityError(ValueError):
    """An explicit solver step size exceeds its stability limit."""


class FitError(ValueError):
    """A regression/fit has too few usable points to proceed."""
