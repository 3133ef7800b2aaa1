"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


class DimensionError(ValueError):
    """Array shapes or dimensions do not agree."""


class NotPositiveDefiniteError(ValueError):
    """Cholesky factorization failed after every jitter escalation."""


class ComplexityError(ValueError):
    """The requested computation would blow up combinatorially."""


class NumericalError(RuntimeError):
    """A non-finite value appeared during evaluation or training.

    Attributes
    ----------
    block : str or None
        Name of the parameter block implicated, when known.
    step : int or None
        Optimizer step at which the failure occurred, when known.
    reason : str
        The message without the block/step suffix.
    """

    def __init__(self, message, block=None, step=None):
        self.reason = message
        details = []
        if block is not None:
            details.append(f"block={block}")
        if step is not None:
            details.append(f"step={step}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)
        self.block = block
        self.step = step
