"""
Error hierarchy for the pragmabench harness.

Every error carries a stable token (``code``) that the CLI prints on the
diagnostic stream, and the process exit code it maps to.
"""

from enum import Enum
from typing import Optional


class ErrorClass(str, Enum):
    """Classification of provider failures used by the retry policy."""

    AUTH = "auth_error"
    BAD_REQUEST = "bad_request"
    RATE_LIMITED = "rate_limited"
    TRANSIENT = "transient"
    TIMEOUT = "timeout"


class HarnessError(Exception):
    code = "E_HARNESS"
    exit_code = 1

    def __init__(self, message: str, code: Optional[str] = None):
        self.message = message
        if code:
            self.code = code
        super().__init__(message)

    def token(self) -> str:
        return f"error[{self.code}]: {self.message}"


class ConfigurationError(HarnessError):
    code = "E_CONFIG"
    exit_code = 2


class ArgumentError(HarnessError):
    code = "E_ARGUMENT"
    exit_code = 2


class FormatError(HarnessError):
    """A dataset file that does not match its documented layout."""

    code = "E_FORMAT"
    exit_code = 3

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        key: Optional[str] = None,
        line: Optional[int] = None,
    ):
        self.path = path
        self.key = key
        self.line = line
        location = []
        if path:
            location.append(str(path))
        if key is not None:
            location.append(f"key={key}")
        if line is not None:
            location.append(f"line={line}")
        if location:
            message = f"{message} [{', '.join(location)}]"
        super().__init__(message)


class DataError(HarnessError):
    code = "E_DATA"
    exit_code = 3


class RunIOError(HarnessError):
    code = "E_IO"
    exit_code = 3


class EmptyRunError(HarnessError):
    code = "E_EMPTY_RUN"
    exit_code = 3


class EmptyReportError(HarnessError):
    code = "E_EMPTY_REPORT"
    exit_code = 2


class SmokeCheckError(HarnessError):
    code = "E_SMOKE"
    exit_code = 5


class ScriptError(HarnessError):
    """Mock script could not answer a request."""

    code = "E_MOCK_SCRIPT"
    exit_code = 4


class ProviderError(HarnessError):
    error_class = ErrorClass.TRANSIENT
    code = "E_PROVIDER"
    exit_code = 4

    def __init__(self, message: str, provider_id: str = "", status: Optional[int] = None):
        self.provider_id = provider_id
        self.status = status
        super().__init__(message)


class AuthError(ProviderError):
    error_class = ErrorClass.AUTH
    code = "E_AUTH"


class BadRequestError(ProviderError):
    error_class = ErrorClass.BAD_REQUEST
    code = "E_BAD_REQUEST"


class RateLimitedError(ProviderError):
    error_class = ErrorClass.RATE_LIMITED
    code = "E_RATE_LIMITED"


class TransientError(ProviderError):
    error_class = ErrorClass.TRANSIENT
    code = "E_TRANSIENT"


class ProviderTimeoutError(ProviderError):
    error_class = ErrorClass.TIMEOUT
    code = "E_TIMEOUT"
