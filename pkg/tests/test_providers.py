import os
from unittest.mock import Mock, patch

import pytest
import requests

from models.config import ProviderDialect, ProviderSettings, default_providers
from models.llm import ChatMessage, ChatRole, CompletionRequest
from pipeline.errors import (
    AuthError,
    BadRequestError,
    ConfigurationError,
    ProviderTimeoutError,
    RateLimitedError,
    TransientError,
)
from pipeline.providers import (
    AnthropicCompatibleProvider,
    OpenAICompatibleProvider,
    ProviderFactory,
    classify_status,
)


def chat_request(provider_id="openai", system=None, stop=None) -> CompletionRequest:
    messages = []
    if system:
        messages.append(ChatMessage(role=ChatRole.SYSTEM, content=system))
    messages.append(ChatMessage(role=ChatRole.USER, content="Is this sarcastic?"))
    return CompletionRequest(
        provider_id=provider_id,
        model="test-model",
        messages=messages,
        temperature=0.0,
        max_tokens=64,
        stop=stop,
    )


class TestClassifyStatus:
    @pytest.mark.parametrize(
        "status, error_type",
        [
            (401, AuthError),
            (403, AuthError),
            (429, RateLimitedError),
            (500, TransientError),
            (503, TransientError),
            (400, BadRequestError),
            (404, BadRequestError),
        ],
    )
    def test_status_mapping(self, status, error_type):
        error = classify_status(status, "openai", "details")
        assert type(error) is error_type
        assert error.status == status
        assert "HTTP" in str(error)


class TestOpenAICompatibleProvider:
    @pytest.fixture
    def provider(self):
        return OpenAICompatibleProvider("openai", default_providers()["openai"])

    @pytest.fixture
    def success_body(self):
        return {
            "id": "chatcmpl-1",
            "model": "test-model",
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": "VERDICT: SARCASTIC"},
                    "finish_reason": "stop",
                }
            ],
            "usage": {"prompt_tokens": 12, "completion_tokens": 4, "total_tokens": 16},
        }

    @patch("pipeline.providers.requests.post")
    def test_successful_completion(self, mock_post, provider, success_body):
        mock_post.return_value = Mock(status_code=200, json=Mock(return_value=success_body))

        with patch.dict(os.environ, {"PRAGMABENCH_OPENAI_KEY": "sk-test"}):
            response = provider.complete(chat_request(stop=["\n\n"]))

        assert response.text == "VERDICT: SARCASTIC"
        assert response.prompt_tokens == 12
        assert response.completion_tokens == 4
        assert response.provider_meta["finish_reason"] == "stop"

        args, kwargs = mock_post.call_args
        assert args[0] == "https://api.openai.com/v1/chat/completions"
        assert kwargs["headers"]["Authorization"] == "Bearer sk-test"
        assert kwargs["json"]["messages"] == [{"role": "user", "content": "Is this sarcastic?"}]
        assert kwargs["json"]["stop"] == ["\n\n"]
        assert kwargs["timeout"] == 120.0

    @patch("pipeline.providers.requests.post")
    def test_missing_credential_fails_before_network(self, mock_post, provider):
        with patch.dict(os.environ, {}, clear=True):
            with pytest.raises(AuthError, match="PRAGMABENCH_OPENAI_KEY"):
                provider.complete(chat_request())
        mock_post.assert_not_called()

    @patch("pipeline.providers.requests.post")
    def test_http_error_is_classified(self, mock_post, provider):
        mock_post.return_value = Mock(status_code=429, text="slow down")
        with patch.dict(os.environ, {"PRAGMABENCH_OPENAI_KEY": "sk-test"}):
            with pytest.raises(RateLimitedError):
                provider.complete(chat_request())

    @patch("pipeline.providers.requests.post")
    def test_timeout(self, mock_post, provider):
        mock_post.side_effect = requests.Timeout("read timed out")
        with patch.dict(os.environ, {"PRAGMABENCH_OPENAI_KEY": "sk-test"}):
            with pytest.raises(ProviderTimeoutError):
                provider.complete(chat_request())

    @patch("pipeline.providers.requests.post")
    def test_connection_error_is_transient(self, mock_post, provider):
        mock_post.side_effect = requests.ConnectionError("refused")
        with patch.dict(os.environ, {"PRAGMABENCH_OPENAI_KEY": "sk-test"}):
            with pytest.raises(TransientError):
                provider.complete(chat_request())

    @patch("pipeline.providers.requests.post")
    def test_unexpected_body_is_transient(self, mock_post, provider):
        mock_post.return_value = Mock(status_code=200, json=Mock(return_value={"choices": []}))
        with patch.dict(os.environ, {"PRAGMABENCH_OPENAI_KEY": "sk-test"}):
            with pytest.raises(TransientError, match="Unexpected response body"):
                provider.complete(chat_request())

    @patch("pipeline.providers.requests.post")
    def test_local_server_needs_no_key(self, mock_post, success_body):
        mock_post.return_value = Mock(status_code=200, json=Mock(return_value=success_body))
        provider = OpenAICompatibleProvider("local", default_providers()["local"])
        with patch.dict(os.environ, {}, clear=True):
            provider.complete(chat_request("local"))
        assert "Authorization" not in mock_post.call_args.kwargs["headers"]

    def test_base_url_override(self):
        with patch.dict(os.environ, {"PRAGMABENCH_LOCAL_URL": "http://gpu-box:9000/v1/"}):
            provider = OpenAICompatibleProvider("local", default_providers()["local"])
        assert provider.base_url == "http://gpu-box:9000/v1"

    def test_missing_base_url(self):
        settings = ProviderSettings(dialect=ProviderDialect.OPENAI)
        with patch.dict(os.environ, {}, clear=True):
            with pytest.raises(ConfigurationError, match="base_url"):
                OpenAICompatibleProvider("custom", settings)


class TestAnthropicCompatibleProvider:
    @patch("pipeline.providers.requests.post")
    def test_system_turns_move_to_top_level(self, mock_post):
        mock_post.return_value = Mock(
            status_code=200,
            json=Mock(
                return_value={
                    "id": "msg_1",
                    "content": [
                        {"type": "text", "text": "Analysis...\n"},
                        {"type": "text", "text": "VERDICT: NOT SARCASTIC"},
                    ],
                    "stop_reason": "end_turn",
                    "usage": {"input_tokens": 20, "output_tokens": 8},
                }
            ),
        )
        provider = AnthropicCompatibleProvider("anthropic", default_providers()["anthropic"])

        with patch.dict(os.environ, {"PRAGMABENCH_ANTHROPIC_KEY": "ant-test"}):
            response = provider.complete(
                chat_request("anthropic", system="You are a linguist.", stop=["END"])
            )

        assert response.text == "Analysis...\nVERDICT: NOT SARCASTIC"
        assert response.prompt_tokens == 20
        args, kwargs = mock_post.call_args
        assert args[0] == "https://api.anthropic.com/v1/messages"
        assert kwargs["headers"]["x-api-key"] == "ant-test"
        assert kwargs["headers"]["anthropic-version"] == "2023-06-01"
        assert kwargs["json"]["system"] == "You are a linguist."
        assert kwargs["json"]["stop_sequences"] == ["END"]
        assert all(m["role"] != "system" for m in kwargs["json"]["messages"])

    @patch("pipeline.providers.requests.post")
    def test_forbidden_is_auth_error(self, mock_post):
        mock_post.return_value = Mock(status_code=403, text="forbidden")
        provider = AnthropicCompatibleProvider("anthropic", default_providers()["anthropic"])
        with patch.dict(os.environ, {"PRAGMABENCH_ANTHROPIC_KEY": "ant-test"}):
            with pytest.raises(AuthError):
                provider.complete(chat_request("anthropic"))


class TestProviderFactory:
    def test_dialects(self):
        assert set(ProviderFactory.get_available_dialects()) == {
            "openai-compatible",
            "anthropic-compatible",
        }

    def test_mock_dialect_has_no_remote_provider(self):
        with pytest.raises(ConfigurationError):
            ProviderFactory.create_provider("mock", default_providers()["mock"])

    def test_creates_by_dialect(self):
        provider = ProviderFactory.create_provider("anthropic", default_providers()["anthropic"])
        assert isinstance(provider, AnthropicCompatibleProvider)
