"""Exception types shared across the toolkit."""


class ScreenEvalError(Exception):
    """Base class for all toolkit errors."""


class DomainError(ScreenEvalError, ValueError):
    """An argument value is outside its documented domain."""


class DegenerateInputError(DomainError):
    """Input is formally in range but carries no usable information."""


class ContractError(ScreenEvalError):
    """A cross-record precondition was violated (e.g. mismatched image ids)."""


class SequencingError(ScreenEvalError):
    """An adjudication submission arrived out of turn."""


class AuthorizationError(ScreenEvalError):
    """The actor is not a participant in the targeted session or resource."""


class ProtocolViolation(ScreenEvalError):
    """A submission would break the adjudication protocol (e.g. a 4th grade)."""


class ConflictError(ScreenEvalError):
    """State conflict: duplicate session, or client acted on stale state."""


class UndefinedMetricError(ScreenEvalError):
    """The requested statistic is undefined on the given data."""


class IncompleteInputError(ScreenEvalError):
    """Required upstream artifacts are missing (e.g. unclosed sessions)."""

    def __init__(self, message: str, pending: list | None = None):
        super().__init__(message)
        self.pending = list(pending) if pending else []


class ParseError(ScreenEvalError):
    """A delimited input file failed schema validation."""

    def __init__(self, path, line: int | None, message: str):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class IntegrityError(ScreenEvalError):
    """Referential integrity failure between ingested files."""

    def __init__(self, message: str, offenders: list | None = None):
        self.offenders = list(offenders) if offenders else []
        if self.offenders:
            preview = ", ".join(str(o) for o in self.offenders[:10])
            more = "" if len(self.offenders) <= 10 else f" (+{len(self.offenders) - 10} more)"
            message = f"{message}: {preview}{more}"
        super().__init__(message)
