"""Exception hierarchy shared by all modules."""


class CausalAugError(Exception):
    """Base class for every error raised by this package."""


class InvalidDimensionError(CausalAugError, ValueError):
    pass


class InvalidIndexError(CausalAugError, IndexError):
    pass


class SingularMatrixError(CausalAugError, ArithmeticError):
    """Raised when a matrix is singular or too ill-conditioned to invert."""

    def __init__(self, message: str, rcond: float):
        super().__init__(f"{message} (reciprocal condition estimate {rcond:.3e})")
        self.rcond = rcond


class SingularSystemError(CausalAugError, ArithmeticError):
    pass


class ChannelMismatchError(CausalAugError, ValueError):
    pass


class InvalidSpecError(CausalAugError, ValueError):
    pass


class EmptyDatasetError(CausalAugError, ValueError):
    pass


class DivergenceError(CausalAugError, ArithmeticError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"loss became non-finite ({loss}) in epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


class FormatError(CausalAugError, ValueError):
    pass


class LengthMismatchError(FormatError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"payload length mismatch: expected {expected} bytes, got {actual}")
        self.expected = expected
        self.actual = actual


class InsufficientDataError(CausalAugError, ValueError):
    pass


class InsufficientDomainsError(CausalAugError, ValueError):
    pass


class ConfigError(CausalAugError, ValueError):
    pass
