"""Exception hierarchy shared by every module."""


class MarError(Exception):
    """Base class for all errors raised by marlvm."""


class InvalidArgumentError(MarError, ValueError):
    pass


class DegenerateRowError(MarError, ValueError):
    """A row has (near-)zero norm, so its direction is undefined."""


class DependentRowsError(MarError, ValueError):
    """Rows are linearly dependent where independence is required."""


class NumericalFailureError(MarError, ArithmeticError):
    pass


class CapacityError(MarError):
    """An exact computation would exceed the enumeration budget."""


class ParseError(MarError, ValueError):
    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.line = line
        self.path = path
