"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Inputs have inconsistent lengths or live on the wrong tree level."""


class DomainError(ValueError):
    """An input lies outside the set where the operation is defined."""


class ParseError(ValueError):
    """A delimited input file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before meeting its tolerance.

    The best iterate found so far is kept on ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
