"""Exception hierarchy. The CLI maps each family onto an exit code."""


class AIFMError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(AIFMError, ValueError):
    """Invalid arguments, configs or cross-field inconsistencies."""

    exit_code = 2


class DomainError(ConfigurationError):
    """A point or field lies outside the domain it was evaluated on."""


class NumericError(AIFMError, ArithmeticError):
    """Non-finite values appeared during a computation."""

    exit_code = 3

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class FormatError(AIFMError, IOError):
    """Malformed or truncated artifact file."""

    exit_code = 4

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class IngestionError(FormatError):
    """External velocity field could not be ingested."""


class PipelineError(AIFMError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
