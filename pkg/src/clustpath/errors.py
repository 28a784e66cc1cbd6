"""Exception hierarchy shared by the solver, the oracles and the CLI."""


class ClustPathError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InputError(ClustPathError, ValueError):
    """Invalid user input (shapes, non-finite values, bad options)."""

    exit_code = 2


class RankDeficientError(InputError):
    """The design matrix does not have full column rank.

    Adding a small ridge term (``ridge_augment`` / ``--ridge``) always fixes it.
    """


class NumericalError(ClustPathError, ArithmeticError):
    """Numerical breakdown: singular blocks, degenerate geometry."""

    exit_code = 3


class DegeneracyError(NumericalError):
    """Events are not isolated (e.g. slopes fail to separate after a split)."""


class StateCorruptionError(NumericalError):
    """The path state violates an invariant it should maintain by construction."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}


class ConvergenceError(NumericalError):
    """An iterative oracle hit its iteration cap."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class IterationCapError(ClustPathError):
    exit_code = 4
