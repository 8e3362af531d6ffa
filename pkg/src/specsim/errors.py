"""Exception types shared across the toolkit."""


class SpecsimError(Exception):
    """Base class for every error raised by specsim."""


class TraceParseError(SpecsimError):
    """A trace file line could not be parsed as a valid record."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class TraceValidationError(SpecsimError):
    """A trace record violates an invariant (negative value, cap overflow, ...)."""

    def __init__(self, message: str, request_id: str | None = None, position: int | None = None):
        where = []
        if request_id is not None:
            where.append(f"request_id={request_id!r}")
        if position is not None:
            where.append(f"position={position}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)
        self.request_id = request_id
        self.position = position


class TraceAlignmentError(SpecsimError):
    """Combine policies require position-aligned traces of equal length."""


class CostConfigError(SpecsimError):
    """A cost-model configuration is empty or inconsistent."""


class UnknownModelError(SpecsimError):
    """A deployment referenced a model name absent from the spec registry."""
