"""
Errors
======
Exception hierarchy shared by every stage of the pipeline.

Each family maps to one command-line exit code (see ``exit_code_for``).
"""


class MotencError(Exception):
    """Base class for all errors raised by motenc."""

    exit_code = 1


class ShapeError(MotencError, ValueError):
    """Tensor shapes do not compose."""

    exit_code = 2

    def __init__(self, message, *shapes):
        if shapes:
            message = f"{message}: " + " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(message)
        self.shapes = shapes


class ParameterError(MotencError, ValueError):
    """An argument is outside its legal range."""

    exit_code = 2


class ConfigError(MotencError):
    """
    Invalid configuration.

    Carries every problem found, so a user can fix them all in one pass.
    """

    exit_code = 2

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ValidationError(ConfigError):
    """Two artifacts (checkpoint, schema, data) do not fit together."""


class DataError(MotencError):
    """Motion data is unusable (non-finite values, wrong schema, ...)."""

    exit_code = 3


class ParseError(DataError):
    """A motion file could not be parsed."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class CheckpointError(MotencError):
    """Base class for checkpoint load failures."""

    exit_code = 3


class CheckpointFormatError(CheckpointError):
    """Wrong magic bytes or an unreadable header."""


class CheckpointVersionError(CheckpointError):
    """The file was written by an unsupported format version."""


class CheckpointTruncatedError(CheckpointError):
    """The file ends before the declared payload does."""


class CheckpointChecksumError(CheckpointError):
    """The CRC-32 trailer does not match the content."""


class EvaluationError(MotencError):
    """An evaluation has nothing to evaluate."""

    exit_code = 3


class NumericError(MotencError):
    """Training diverged (NaN or infinite loss)."""

    exit_code = 4


def exit_code_for(error):
    """
    Map an exception to the command-line exit code.

    Args:
        error (BaseException): The caught exception

    Returns:
        int: 2 config/validation, 3 data/parse/I-O, 4 numeric failure
    """
    if isinstance(error, MotencError):
        return error.exit_code
    if isinstance(error, OSError):
        return 3
    return 1
