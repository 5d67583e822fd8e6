"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a routine is defined or trusted."""


class SolverError(RuntimeError):
    """The implicit drift solve failed to converge.

    ``step`` is the scheme step index at which the failure occurred, or None
    when the solver was called outside a path integration.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class ExperimentAborted(RuntimeError):
    """Too many paths failed for the Monte Carlo estimate to be trusted."""
