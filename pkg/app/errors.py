"""Exception hierarchy. Every error carries the process exit code the CLI reports for it."""
from typing import Optional


class LabError(Exception):
    exit_code: int = 3

    def __init__(self, message: str) -> None:
        super().__init__(message)
        self.message = message


# --- Configuration (exit 2) ---

class ConfigError(LabError):
    exit_code = 2


# --- Numeric / input errors (exit 3) ---

class DimensionMismatchError(LabError, ValueError):
    pass


class DegenerateEmbeddingError(LabError, ValueError):
    """An embedding collapsed to the zero vector, so cosine similarity is undefined."""

    def __init__(self, message: str, index: Optional[int] = None) -> None:
        super().__init__(message)
        self.index = index


class InvalidPlanError(LabError, ValueError):
    pass


class SupportMismatchError(LabError, ValueError):
    pass


class LanguageIndexError(LabError, ValueError):
    pass


class BoundInputError(LabError, ValueError):
    pass


class NumericalDivergenceError(LabError, ArithmeticError):
    pass


class ExperimentRunError(LabError):
    def __init__(self, message: str, strategy: str, seed: int) -> None:
        super().__init__(f"[strategy={strategy} seed={seed}] {message}")
        self.detail = message
        self.strategy = strategy
        self.seed = seed

    def __reduce__(self):
        # worker processes send this back through pickle
        return (type(self), (self.detail, self.strategy, self.seed))


# --- Storage (exit 3) ---

class StorageError(LabError, OSError):
    pass


class CorpusFormatError(StorageError):
    """Bad magic bytes or malformed content."""


class CheckpointFormatError(StorageError):
    pass


class VersionMismatchError(StorageError):
    pass


class TruncatedFileError(StorageError):
    pass


# --- Verdicts (exit 4) ---

class AssertionFailure(LabError):
    exit_code = 4
