"""Exception hierarchy shared by every module.

Input/config problems map to CLI exit code 2, numeric failures to 1.
"""


class CabxdeError(Exception):
    exit_code = 1


class DataError(CabxdeError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 2

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ConfigError(CabxdeError, ValueError):
    exit_code = 2


class ShapeError(CabxdeError, ValueError):
    exit_code = 1


class NumericalError(CabxdeError, ArithmeticError):
    """Non-finite loss, state or objective."""

    exit_code = 1


class MissingArtifactError(CabxdeError, FileNotFoundError):
    exit_code = 2
