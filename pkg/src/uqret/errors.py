"""Exception hierarchy shared across the package.

Two broad failure families matter to callers (and to the CLI exit codes):
malformed input versus a computation that went numerically wrong.
"""


class UqretError(Exception):
    """Base class for every error raised by this package."""


class InputValidationError(UqretError):
    """Malformed or inconsistent input: files, shapes, parameters."""


class NumericalError(UqretError):
    """A computation produced non-finite or otherwise unusable values."""
