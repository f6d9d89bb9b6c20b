"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes do not conform to an operation's requirements."""


class ConfigError(ValueError):
    """A configuration value or combination of values is invalid."""


class ValidationError(ValueError):
    """Runtime input violates an operation's preconditions."""


class SizeError(ValidationError):
    """An input exceeds a combinatorial or capacity guard."""


class CheckpointFormatError(ValueError):
    """A checkpoint file is malformed; message includes the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
