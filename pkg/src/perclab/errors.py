"""Error taxonomy shared across the package.

The CLI maps these onto distinct exit codes, so every guard in the library
raises one of the classes below rather than a bare ValueError.
"""


class PerclabError(Exception):
    """Base class for all package errors."""


class PreconditionError(PerclabError, ValueError):
    """An operation was called with inputs that violate its contract."""


class HypothesisViolationError(PerclabError, ValueError):
    """An experiment's mathematical hypotheses are not met by the inputs."""


class ResourceGuardError(PerclabError, RuntimeError):
    """A size/enumeration guard was exceeded; the request is too large."""

    def __init__(self, message, reached=None):
        super().__init__(message)
        self.reached = reached


class InternalCheckError(PerclabError, RuntimeError):
    """A postcondition that should hold by theorem failed; indicates a bug."""
