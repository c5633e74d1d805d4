"""Exception hierarchy shared across the package."""


class QsannealError(Exception):
    """Base class for all errors raised by qsanneal."""


class TooSmall(QsannealError, ValueError):
    pass


class AllDegenerate(QsannealError, ValueError):
    pass


class InvalidProposal(QsannealError, ValueError):
    pass


class InvalidKernel(QsannealError, ValueError):
    pass


class MismatchError(QsannealError, ArithmeticError):
    """Two independent constructions of the same object disagree."""


class NegativeEigenvalue(QsannealError, ArithmeticError):
    """Kernel spectrum dips below zero; the chain needs more laziness."""


class ZeroGap(QsannealError, ValueError):
    pass


class DimensionTooLarge(QsannealError, ValueError):
    pass


class CompletionFailure(QsannealError, ArithmeticError):
    pass


class RegisterTooWide(QsannealError, ValueError):
    pass


class UnknownFamily(QsannealError, ValueError):
    pass


class ConfigError(QsannealError, ValueError):
    """Malformed experiment configuration. ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
