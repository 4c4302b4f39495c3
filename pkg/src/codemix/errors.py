"""Exception hierarchy shared by every codemix module."""


class CodemixError(Exception):
    """Base class for all errors raised by this package."""


class EmptyText(CodemixError, ValueError):
    pass


class ParseError(CodemixError, ValueError):
    """Malformed input file. ``line`` is 1-based, or None for whole-file problems."""

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


class ConfigError(CodemixError, ValueError):
    pass


class NumericalError(CodemixError, ArithmeticError):
    pass


class PersistenceError(CodemixError):
    pass


class TranslatorError(CodemixError):
    pass
