"""
Exception hierarchy for the relational inference toolkit.
Every error carries the process exit code the command line reports for it.
"""


class GdpError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ContractError(GdpError, ValueError):
    """A precondition of an operation was violated."""

    exit_code = 1


class UsageError(GdpError):
    """Unknown system, graph family, experiment tag or malformed option."""

    exit_code = 1


class DimensionError(ContractError):
    """Operand shapes are incompatible for a primitive."""

    def __init__(self, op_kind, message):
        super().__init__(f"{op_kind}: {message}")
        self.op_kind = op_kind


class NumericError(GdpError, ArithmeticError):
    """A computation produced non-finite values."""

    exit_code = 3


class SingularityError(NumericError):
    """A dynamics equation was evaluated at a pole."""


class DivergenceError(NumericError):
    """An integration or simulation left the finite range."""

    def __init__(self, message, step=None, seed=None):
        super().__init__(message)
        self.step = step
        self.seed = seed


class TrainingAborted(NumericError):
    """Training hit a non-finite loss."""

    def __init__(self, epoch, message="non-finite loss"):
        super().__init__(f"training aborted at epoch {epoch}: {message}")
        self.epoch = epoch


class UndefinedMetricError(GdpError):
    """AUC requested on ground truth with a single class."""

    exit_code = 2


class DataError(GdpError):
    """Missing, unreadable or inconsistent data files."""

    exit_code = 2
