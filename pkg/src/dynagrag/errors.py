"""Exception hierarchy shared across the engine."""


class DynaGragError(Exception):
    """Base class for all engine errors."""


class InputError(DynaGragError):
    """Caller supplied invalid arguments."""


class ConfigError(DynaGragError):
    """Invalid configuration value or combination."""


class TransportError(DynaGragError):
    """Network-level failure after exhausting retries."""


class BackendError(DynaGragError):
    """LLM backend returned a non-success or inconsistent reply."""

    def __init__(self, message, status=None, body=None):
        super().__init__(message)
        self.status = status
        self.body = body


class MalformedResponseError(BackendError):
    """Backend replied 2xx but the payload is unusable."""


class ExtractionError(DynaGragError):
    """Entity/relation extraction reply could not be parsed."""

    def __init__(self, message, raw_reply=""):
        super().__init__(message)
        self.raw_reply = raw_reply


class ConsistencyError(DynaGragError):
    """Internal data structures disagree (e.g. dangling endpoints)."""


class StateError(DynaGragError):
    """Required persisted state is missing or unreadable."""


class JudgeError(DynaGragError):
    """The evaluation judge reply could not be parsed."""


class GenerationError(DynaGragError):
    """The LLM produced an empty or unusable completion."""
