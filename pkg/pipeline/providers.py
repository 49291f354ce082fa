import os
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional, Type

import requests
from pydantic import ValidationError

from models.config import ProviderDialect, ProviderSettings
from models.llm import ChatRole, CompletionRequest, CompletionResponse
from models.wire import AnthropicMessageResponse, OpenAIChatResponse
from pipeline.errors import (
    AuthError,
    BadRequestError,
    ConfigurationError,
    ProviderError,
    ProviderTimeoutError,
    RateLimitedError,
    TransientError,
)

ANTHROPIC_VERSION = "2023-06-01"


class CompletionProvider(ABC):
    """One chat-completion backend. Implementations must be thread-safe."""

    def __init__(self, provider_id: str):
        self.provider_id = provider_id

    @abstractmethod
    def complete(self, request: CompletionRequest) -> CompletionResponse:
        pass


def classify_status(status: int, provider_id: str, detail: str = "") -> ProviderError:
    message = f"{provider_id} returned HTTP {status}"
    if detail:
        message = f"{message}: {detail[:200]}"

    if status in (401, 403):
        return AuthError(message, provider_id, status)
    if status == 429:
        return RateLimitedError(message, provider_id, status)
    if status >= 500:
        return TransientError(message, provider_id, status)
    return BadRequestError(message, provider_id, status)


class HttpProvider(CompletionProvider):
    """Shared request/error handling for the remote dialects."""

    def __init__(self, provider_id: str, settings: ProviderSettings):
        super().__init__(provider_id)
        self.settings = settings
        self.base_url = self._resolve_base_url(provider_id, settings)
        self.api_key_env = settings.api_key_env
        self.timeout = settings.timeout_seconds

    @staticmethod
    def _resolve_base_url(provider_id: str, settings: ProviderSettings) -> str:
        override = os.getenv(f"PRAGMABENCH_{provider_id.upper()}_URL")
        base_url = override or settings.base_url
        if not base_url:
            raise ConfigurationError(f"Provider '{provider_id}' has no base_url")
        return base_url.rstrip("/")

    def _api_key(self) -> Optional[str]:
        if not self.api_key_env:
            return None
        api_key = os.getenv(self.api_key_env)
        if not api_key:
            # fails before any network activity
            raise AuthError(
                f"Credential variable {self.api_key_env} is not set", self.provider_id
            )
        return api_key

    def _post(self, url: str, payload: Dict[str, Any], headers: Dict[str, str]) -> Dict:
        try:
            response = requests.post(url, json=payload, headers=headers, timeout=self.timeout)
        except requests.Timeout as e:
            raise ProviderTimeoutError(f"Request timed out: {e}", self.provider_id)
        except requests.RequestException as e:
            raise TransientError(f"API request failed: {e}", self.provider_id)

        if response.status_code >= 400:
            raise classify_status(response.status_code, self.provider_id, response.text)

        try:
            return response.json()
        except ValueError as e:
            raise TransientError(f"Response is not JSON: {e}", self.provider_id)


class OpenAICompatibleProvider(HttpProvider):
    """``POST {base_url}/chat/completions``; also serves local open-model servers."""

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        headers = {"Content-Type": "application/json"}
        api_key = self._api_key()
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        payload: Dict[str, Any] = {
            "model": request.model,
            "messages": [
                {"role": message.role.value, "content": message.content}
                for message in request.messages
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.stop:
            payload["stop"] = list(request.stop)

        body = self._post(f"{self.base_url}/chat/completions", payload, headers)
        try:
            parsed = OpenAIChatResponse.model_validate(body)
        except ValidationError as e:
            raise TransientError(f"Unexpected response body: {e}", self.provider_id)

        choice = parsed.choices[0]
        usage = parsed.usage
        return CompletionResponse(
            text=choice.message.content or "",
            prompt_tokens=usage.prompt_tokens if usage else None,
            completion_tokens=usage.completion_tokens if usage else None,
            provider_meta={"id": parsed.id, "finish_reason": choice.finish_reason},
        )


class AnthropicCompatibleProvider(HttpProvider):
    """``POST {base_url}/v1/messages``; system turns travel in the top-level field."""

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        headers = {
            "Content-Type": "application/json",
            "anthropic-version": ANTHROPIC_VERSION,
        }
        api_key = self._api_key()
        if api_key:
            headers["x-api-key"] = api_key

        system_parts: List[str] = [
            m.content for m in request.messages if m.role is ChatRole.SYSTEM
        ]
        payload: Dict[str, Any] = {
            "model": request.model,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "messages": [
                {"role": m.role.value, "content": m.content}
                for m in request.messages
                if m.role is not ChatRole.SYSTEM
            ],
        }
        if system_parts:
            payload["system"] = "\n\n".join(system_parts)
        if request.stop:
            payload["stop_sequences"] = list(request.stop)

        body = self._post(f"{self.base_url}/v1/messages", payload, headers)
        try:
            parsed = AnthropicMessageResponse.model_validate(body)
        except ValidationError as e:
            raise TransientError(f"Unexpected response body: {e}", self.provider_id)

        usage = parsed.usage
        return CompletionResponse(
            text=parsed.text(),
            prompt_tokens=usage.input_tokens if usage else None,
            completion_tokens=usage.output_tokens if usage else None,
            provider_meta={"id": parsed.id, "stop_reason": parsed.stop_reason},
        )


class ProviderFactory:
    _dialects: Dict[ProviderDialect, Type[HttpProvider]] = {}

    @classmethod
    def register_dialect(cls, dialect: ProviderDialect, provider_class: Type[HttpProvider]):
        cls._dialects[dialect] = provider_class

    @classmethod
    def create_provider(cls, provider_id: str, settings: ProviderSettings) -> CompletionProvider:
        if settings.dialect not in cls._dialects:
            raise ConfigurationError(
                f"Provider '{provider_id}' uses dialect '{settings.dialect.value}', "
                "which has no remote implementation"
            )
        return cls._dialects[settings.dialect](provider_id, settings)

    @classmethod
    def get_available_dialects(cls) -> List[str]:
        return [dialect.value for dialect in cls._dialects]


ProviderFactory.register_dialect(ProviderDialect.OPENAI, OpenAICompatibleProvider)
ProviderFactory.register_dialect(ProviderDialect.ANTHROPIC, AnthropicCompatibleProvider)
