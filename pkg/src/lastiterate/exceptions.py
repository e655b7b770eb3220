"""Exception types raised by the library."""


class LastIterateError(ValueError):
    """Base class for all input/contract errors raised by this package."""


class HorizonTooSmallError(LastIterateError):
    pass


class NonPositiveParameterError(LastIterateError):
    pass


class UnknownFamilyError(LastIterateError):
    pass


class NotDecreasingError(LastIterateError):
    pass


class InvalidProblemError(LastIterateError):
    pass


class DimensionMismatchError(LastIterateError):
    pass


class IteratesNotRecordedError(LastIterateError):
    pass


class RangeError(LastIterateError):
    pass


class InsufficientHorizonError(LastIterateError):
    pass


class ConfigError(LastIterateError):
    """Malformed configuration; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SeedRunError(RuntimeError):
    """A single seed of an ensemble failed; the seed is kept for replay."""

    def __init__(self, seed, cause):
        self.seed = seed
        self.cause = cause
        super().__init__(f"run with seed {seed} failed: {cause!r}")


class NonPositiveSuboptimalityError(LastIterateError):
    pass


class EmptyReportError(LastIterateError):
    pass
