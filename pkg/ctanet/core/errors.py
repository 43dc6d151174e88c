"""Exception types raised across ctanet.

Every class also derives from the builtin exception that plain Python code
would raise in the same situation, so ``except ValueError`` keeps working.
"""


class CTAError(Exception):
    """Base class for all ctanet errors."""


class DimensionError(CTAError, ValueError):
    """Raised when tensor shapes or axes are incompatible with an operation."""


class ConfigurationError(CTAError, ValueError):
    """Raised for invalid configuration values or architecture mismatches."""


class ContractError(CTAError, ValueError):
    """Raised when a caller violates an operation's precondition."""


class DataFormatError(CTAError, ValueError):
    """Raised when a dataset or checkpoint file is malformed."""


class NumericError(CTAError, ArithmeticError):
    """Raised when a computation produces non-finite values."""
