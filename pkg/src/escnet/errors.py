"""Exception hierarchy shared by the pipeline stages.

Each class maps onto a CLI exit code through ``exit_code``.
"""


class EscError(Exception):
    exit_code = 2


class UsageError(EscError):
    exit_code = 1


class ConfigError(UsageError):
    pass


class DataError(EscError):
    exit_code = 2


class MalformedWav(DataError):
    pass


class UnsupportedEncoding(DataError):
    pass


class EmptyAudio(DataError):
    pass


class ClipTooShort(DataError):
    pass


class TooFewFrames(DataError):
    pass


class ShapeMismatch(EscError, ValueError):
    pass


class EmptyDataset(DataError):
    pass


class NoSegments(DataError):
    pass


class DegenerateInput(DataError):
    pass


class MissingFeatures(DataError):
    pass


class FoldOutOfRange(DataError):
    pass


class FormatError(DataError):
    """Bad magic, version or truncated payload in an ESCF/ESCW file."""


class NumericalError(EscError, FloatingPointError):
    exit_code = 3
