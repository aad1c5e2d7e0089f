"""Exception hierarchy shared by every bitscope module."""


class BitscopeError(Exception):
    """Base class for all library errors."""


class UnrepresentableInput(BitscopeError, ValueError):
    pass


class ParseError(BitscopeError, ValueError):
    """Malformed numeric literal."""


class NotationError(BitscopeError, ValueError):
    """Unknown or malformed representation notation such as ``FI(6,8)``."""

    def __init__(self, token, reason=None):
        self.token = token
        msg = f"unknown representation notation {token!r}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class FormatError(BitscopeError, ValueError):
    """Invalid format parameters or a format the operation cannot handle."""


class ShapeError(BitscopeError, ValueError):
    pass


class OperatorError(BitscopeError, ValueError):
    """An operator id that cannot be resolved or is incompatible with a format."""


class DataError(BitscopeError):
    """Base class for problems with files read from disk."""


class IdxError(DataError, ValueError):
    pass


class ModelFormatError(DataError, ValueError):
    pass


class ChecksumError(ModelFormatError):
    pass


class VersionError(ModelFormatError):
    pass


class ManifestError(ModelFormatError):
    pass


class ExplorationError(BitscopeError, ValueError):
    pass
