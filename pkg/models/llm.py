from enum import Enum
from typing import Any, Dict, FrozenSet, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from pipeline.errors import ErrorClass


UNIT_SEPARATOR = "\x1f"
RECORD_SEPARATOR = "\x1e"


class ChatRole(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


class ChatMessage(BaseModel):
    model_config = ConfigDict(frozen=True)

    role: ChatRole
    content: str


class CompletionRequest(BaseModel):
    """
    One chat-completion exchange as sent to a provider.

    Structural invariants (non-empty messages, trailing user turn) are checked
    by the client before dispatch so that violations surface as BadRequest.
    """

    model_config = ConfigDict(frozen=True)

    provider_id: str
    model: str
    messages: List[ChatMessage]
    temperature: float = Field(default=0.0, ge=0.0)
    max_tokens: int = Field(default=1024, gt=0)
    stop: Optional[List[str]] = None

    def canonical_bytes(self) -> bytes:
        """
        Fixed-order serialization used for digests and cache entries.

        Header fields each end with RS; every message is role, US, content, RS.
        """
        header = [
            self.provider_id,
            self.model,
            f"{self.temperature:.6f}",
            str(self.max_tokens),
            UNIT_SEPARATOR.join(self.stop or []),
        ]
        parts = [field + RECORD_SEPARATOR for field in header]
        for message in self.messages:
            parts.append(
                message.role.value + UNIT_SEPARATOR + message.content + RECORD_SEPARATOR
            )
        return "".join(parts).encode("utf-8")

    def last_user_content(self) -> str:
        for message in reversed(self.messages):
            if message.role is ChatRole.USER:
                return message.content
        return ""


class CompletionResponse(BaseModel):
    model_config = ConfigDict(frozen=True)

    text: str
    prompt_tokens: Optional[int] = None
    completion_tokens: Optional[int] = None
    provider_meta: Dict[str, Any] = Field(default_factory=dict)
    from_cache: bool = False


DEFAULT_RETRY_ON = frozenset(
    {ErrorClass.RATE_LIMITED, ErrorClass.TRANSIENT, ErrorClass.TIMEOUT}
)
NEVER_RETRIED = frozenset({ErrorClass.AUTH, ErrorClass.BAD_REQUEST})


class RetryPolicy(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_attempts: int = Field(default=3, ge=1)
    base_backoff_ms: int = Field(default=500, ge=0)
    backoff_multiplier: float = Field(default=2.0, ge=1.0)
    retry_on: FrozenSet[ErrorClass] = DEFAULT_RETRY_ON

    def should_retry(self, error_class: ErrorClass) -> bool:
        if error_class in NEVER_RETRIED:
            return False
        return error_class in self.retry_on

    def backoff_seconds(self, attempt: int) -> float:
        """Delay before retry number ``attempt`` (1-based)."""
        delay_ms = self.base_backoff_ms * (self.backoff_multiplier ** (attempt - 1))
        return delay_ms / 1000.0
