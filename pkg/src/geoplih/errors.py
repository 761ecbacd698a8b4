"""Exception hierarchy shared across the package.

Each class carries an ``exit_code`` so the command line front end can map
failures onto its stable exit-code contract without string matching.
"""


class GeoplihError(Exception):
    exit_code = 1


class ContractError(GeoplihError, ValueError):
    """A precondition of an operation was violated by the caller."""

    exit_code = 1


class DimensionError(ContractError):
    pass


class SegmentIndexError(GeoplihError, IndexError):
    exit_code = 4


class ParseError(GeoplihError):
    exit_code = 4

    def __init__(self, message, line_number=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line_number is not None:
            where += f":{line_number}" if where else f"line {line_number}"
        super().__init__(f"{where}: {message}" if where else message)
        self.line_number = line_number
        self.path = path


class IntegrityError(GeoplihError):
    exit_code = 4


class EmptyPocketError(GeoplihError):
    exit_code = 4


class CheckpointError(GeoplihError):
    exit_code = 5


class TransferError(CheckpointError):
    exit_code = 5


class NumericAbort(GeoplihError, FloatingPointError):
    exit_code = 3


class UndefinedCorrelationError(GeoplihError, ArithmeticError):
    exit_code = 3
