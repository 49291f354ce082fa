"""
Deterministic mock provider for offline runs and tests.

Returns scripted responses without external LLM services. Three script modes:

    echo-gold             answer each sample's gold label, read from the
                          ``[[sample:<id>]]`` tag the runner embeds in mock mode
    fixed:<label>         always answer the same label
    by-digest:<path>      look the request digest up in a JSON map of replies
"""

import json
import re
import threading
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from models.domain import Label
from models.llm import CompletionRequest, CompletionResponse
from pipeline.errors import ConfigurationError, ScriptError
from pipeline.providers import CompletionProvider
from utils.helpers import sha256_hex

SAMPLE_TAG_PATTERN = re.compile(r"\[\[sample:(.+?)\]\]")

VERDICT_TEXT = {
    Label.SARCASTIC: "VERDICT: SARCASTIC",
    Label.NOT_SARCASTIC: "VERDICT: NOT SARCASTIC",
}


class MockMode(str, Enum):
    ECHO_GOLD = "echo-gold"
    FIXED_LABEL = "fixed"
    BY_DIGEST = "by-digest"


class MockScript(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: MockMode
    label: Optional[Label] = None
    golds: Dict[str, Label] = Field(default_factory=dict)
    replies: Dict[str, str] = Field(default_factory=dict)

    @classmethod
    def echo_gold(cls, golds: Dict[str, Label]) -> "MockScript":
        return cls(mode=MockMode.ECHO_GOLD, golds=golds)

    @classmethod
    def fixed_label(cls, label: Label) -> "MockScript":
        return cls(mode=MockMode.FIXED_LABEL, label=label)

    @classmethod
    def by_digest(cls, replies: Dict[str, str]) -> "MockScript":
        return cls(mode=MockMode.BY_DIGEST, replies=replies)


def parse_mock_mode(mode: str, golds: Optional[Dict[str, Label]] = None) -> MockScript:
    """Build a MockScript from its CLI spelling."""
    token = mode.strip()

    if token == MockMode.ECHO_GOLD.value:
        return MockScript.echo_gold(golds or {})

    if token.startswith(f"{MockMode.FIXED_LABEL.value}:"):
        raw_label = token.split(":", 1)[1].strip().lower().replace(" ", "_").replace("-", "_")
        try:
            return MockScript.fixed_label(Label(raw_label))
        except ValueError:
            raise ConfigurationError(
                f"Unknown mock label '{raw_label}' (expected sarcastic or not_sarcastic)"
            )

    if token.startswith(f"{MockMode.BY_DIGEST.value}:"):
        return MockScript.by_digest(load_digest_map(token.split(":", 1)[1]))

    raise ConfigurationError(
        f"Unknown mock mode '{mode}' (expected echo-gold, fixed:<label> or by-digest:<path>)"
    )


def load_digest_map(path: str) -> Dict[str, str]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            replies = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"Cannot read mock digest map {path}: {e}")

    if not isinstance(replies, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in replies.items()
    ):
        raise ConfigurationError(f"Mock digest map {path} must map digests to reply text")
    return replies


def mock_complete(script: MockScript, request: CompletionRequest) -> CompletionResponse:
    if script.mode is MockMode.FIXED_LABEL:
        return _scripted(VERDICT_TEXT[script.label], script)

    if script.mode is MockMode.ECHO_GOLD:
        match = SAMPLE_TAG_PATTERN.search(request.last_user_content())
        if not match:
            raise ScriptError("echo-gold request carries no [[sample:<id>]] tag")
        sample_id = match.group(1)
        if sample_id not in script.golds:
            raise ScriptError(f"echo-gold has no gold label for sample '{sample_id}'")
        return _scripted(VERDICT_TEXT[script.golds[sample_id]], script)

    digest = sha256_hex(request.canonical_bytes())
    if digest not in script.replies:
        raise ScriptError(f"by-digest script has no reply for digest {digest}")
    return _scripted(script.replies[digest], script)


def _scripted(text: str, script: MockScript) -> CompletionResponse:
    return CompletionResponse(text=text, provider_meta={"mock_mode": script.mode.value})


class MockProvider(CompletionProvider):
    """Thread-safe; counts calls and keeps every request for assertions."""

    def __init__(self, script: MockScript, provider_id: str = "mock"):
        super().__init__(provider_id)
        self.script = script
        self.call_count = 0
        self.call_history: List[CompletionRequest] = []
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._lock:
            self.call_count += 1
            self.call_history.append(request)
        return mock_complete(self.script, request)

    def reset(self) -> None:
        with self._lock:
            self.call_count = 0
            self.call_history = []
