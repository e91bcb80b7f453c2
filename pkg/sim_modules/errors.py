# errors.py – exception hierarchy shared by the simulator, the key store and the CLI
from contextlib import contextmanager


class QkdFhssError(Exception):
    """Base class for every error raised by this project."""


class DomainError(QkdFhssError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class EmptyExchangeError(QkdFhssError):
    """Sifting kept no positions (nothing detected or everything was a decoy)."""


class EstimationError(QkdFhssError):
    """QBER estimation disclosed zero positions."""


class UnverifiedKeyError(QkdFhssError):
    """Privacy amplification was asked to compress a key that failed verification."""


class ZeroKeyError(QkdFhssError):
    """The output-length rule leaves no secret bits."""


class EmptyScheduleError(QkdFhssError, ValueError):
    """A hop schedule was requested from empty key material."""


class InsufficientDataError(QkdFhssError, ValueError):
    """A statistical test was given too few samples."""


class KmsError(QkdFhssError):
    """Base class for key-delivery errors. `status` is the HTTP code the wire layer returns."""

    status = 400
    message = "bad request"

    def __init__(self, message=None):
        super().__init__(message or self.message)
        self.message = message or self.message


class CapacityError(KmsError):
    status = 503
    message = "key store capacity exceeded"


class InsufficientKeysError(KmsError):
    status = 503
    message = "insufficient keys"


class InvalidRequestError(KmsError):
    status = 400
    message = "invalid request"


class UnknownKeyError(KmsError):
    status = 400
    message = "unknown or consumed key_ID"


class ConfigError(QkdFhssError, ValueError):
    """The experiment configuration is malformed or inconsistent."""


class StageError(QkdFhssError):
    """A pipeline stage failed; carries the stage name and the underlying cause."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class SweepPointError(QkdFhssError):
    """A single swept value failed; carries the offending value."""

    def __init__(self, param, value, cause):
        super().__init__(f"{param}={value}: {cause}")
        self.param = param
        self.value = value
        self.cause = cause


@contextmanager
def stage(name):
    """Re-raises any project error inside the block as a StageError tagged with `name`."""
    try:
        yield
    except StageError:
        raise
    except QkdFhssError as exc:
        raise StageError(name, exc) from exc
