# pace_errors.py
"""
Exception hierarchy for the PACE prompt editor.

Every error carries a stable process exit code so the CLI can map failures
without inspecting messages.
"""

from typing import Any, List, Optional


class PaceError(Exception):
    """Base error; unclassified failures are internal (exit 5)"""
    exit_code = 5

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail
        # Iteration records produced before a run aborted
        self.partial_records: List[Any] = []


class UsageError(PaceError):
    exit_code = 1


class ConfigError(PaceError):
    exit_code = 2


class DataError(PaceError):
    exit_code = 3


class CriticLeakError(DataError):
    """A test-split pair reached the critic"""

    def __init__(self, detail: str = "critic leak: test pair"):
        super().__init__(detail)


# Backend failures
class BackendError(PaceError):
    exit_code = 4

    def __init__(self, detail: str, index: Optional[int] = None):
        super().__init__(detail)
        self.index = index

    def tagged(self, label: str, index: int) -> "BackendError":
        """Copy of this error naming the fan-out slot that failed"""
        clone = self.__class__.__new__(self.__class__)
        clone.__dict__.update(self.__dict__)
        clone.detail = f"{self.detail} ({label} {index})"
        clone.index = index
        clone.args = (clone.detail,)
        return clone


class BackendUnavailableError(BackendError):
    pass


class RejectedRequestError(BackendError):
    """HTTP 4xx from the chat-completions endpoint"""

    def __init__(self, status: int, detail: str = ""):
        message = f"rejected request: HTTP {status}"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)
        self.status = status


class CacheMissError(BackendError):
    def __init__(self, fingerprint: str):
        super().__init__(f"cache miss: {fingerprint}")
        self.fingerprint = fingerprint


class CacheWriteError(BackendError):
    pass


class MockUnmatchedError(BackendError):
    def __init__(self, detail: str = "mock unmatched request"):
        super().__init__(detail)


class EmptyPromptError(BackendError):
    pass
