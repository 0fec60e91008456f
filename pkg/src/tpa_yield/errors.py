"""Exception hierarchy.

Each family maps to one CLI exit code: data problems exit 1, I/O problems
exit 2, numeric failures exit 3.
"""


class TpaYieldError(Exception):
    exit_code = 3


class DataError(TpaYieldError, ValueError):
    exit_code = 1


class NumericError(TpaYieldError, ArithmeticError):
    exit_code = 3


class InvalidArgument(TpaYieldError, ValueError):
    exit_code = 1


class _CellError(DataError):
    def __init__(self, row, column, detail=""):
        self.row = row
        self.column = column
        msg = f"row {row}, column {column!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class MissingColumn(DataError):
    pass


class EmptyDataset(DataError):
    pass


class ParseError(_CellError):
    pass


class UnknownLabel(_CellError):
    pass


class OutOfRange(_CellError):
    pass


class UnseenLabel(_CellError):
    pass


class LengthMismatch(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class DegenerateFeature(NumericError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column} is constant")


class DegenerateInput(NumericError):
    pass


class DegenerateTarget(NumericError):
    pass


class NonConvergence(NumericError):
    pass


class NonFiniteLoss(NumericError):
    pass


class MissingArtifact(TpaYieldError, FileNotFoundError):
    exit_code = 2
