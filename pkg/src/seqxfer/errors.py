"""Exception types shared across the package."""


class ContractError(ValueError):
    """A caller violated an operation's precondition or shape contract."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""


class DataError(ValueError):
    """Input data is malformed (bad tags, misaligned corpora, ...)."""


class ParseError(DataError):
    """A text input could not be parsed; message carries the line number."""


class TransferError(ValueError):
    """Checkpoint surgery failed (missing or shape-incompatible parameters)."""
