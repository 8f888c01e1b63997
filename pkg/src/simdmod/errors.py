"""Exception types shared by all modules."""


class ContractError(ValueError):
    """An operation was called outside its documented precondition."""


class WidthError(ContractError):
    """Operands disagree in width, or a value does not fit its width."""


class InvalidModulusError(ContractError):
    """Modulus is even or too small."""


class ConfigError(ValueError):
    """Unsupported parameter combination."""
