"""Exception hierarchy shared by all modules."""


class TorsionError(ValueError):
    """Base class for every error raised by this package."""


class IllConditionedError(TorsionError):
    """A rank or order decision falls too close to the tolerance cutoff."""


class NotAcyclicError(TorsionError):
    """An operation that needs an acyclic complex received one with cohomology."""


class FiltrationError(TorsionError):
    """The differential does not respect the declared filtration."""


class ModelMismatchError(TorsionError):
    """A chain model does not realize the cohomology of the declared critical elements."""


class HypothesisError(TorsionError):
    """The input violates the hypotheses of the requested identity."""

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class StaleReportError(TorsionError):
    """A cohomology report was computed from a different complex or metric."""
