from enum import Enum
from typing import Dict, Optional

from pydantic import BaseModel, ConfigDict, Field

from models.domain import UnparseablePolicy


class ProviderDialect(str, Enum):
    OPENAI = "openai-compatible"
    ANTHROPIC = "anthropic-compatible"
    MOCK = "mock"


class ProviderSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dialect: ProviderDialect
    base_url: Optional[str] = None
    api_key_env: Optional[str] = None
    requests_per_minute: Optional[int] = Field(default=None, gt=0)
    max_in_flight: Optional[int] = Field(default=None, gt=0)
    timeout_seconds: float = Field(default=120.0, gt=0)


class ModelAlias(BaseModel):
    model_config = ConfigDict(extra="forbid")

    provider: str
    model: str


def default_providers() -> Dict[str, ProviderSettings]:
    return {
        "openai": ProviderSettings(
            dialect=ProviderDialect.OPENAI,
            base_url="https://api.openai.com/v1",
            api_key_env="PRAGMABENCH_OPENAI_KEY",
        ),
        "anthropic": ProviderSettings(
            dialect=ProviderDialect.ANTHROPIC,
            base_url="https://api.anthropic.com",
            api_key_env="PRAGMABENCH_ANTHROPIC_KEY",
        ),
        "local": ProviderSettings(
            dialect=ProviderDialect.OPENAI,
            base_url="http://localhost:8000/v1",
        ),
        "mock": ProviderSettings(dialect=ProviderDialect.MOCK),
    }


class HarnessConfig(BaseModel):
    """Every configurable key; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    dataset: Optional[str] = None
    strategy: Optional[str] = None
    provider: Optional[str] = None
    model: Optional[str] = None
    template_set: Optional[str] = None
    mock: Optional[str] = None

    temperature: float = Field(default=0.0, ge=0.0)
    max_tokens_stage1: int = Field(default=1024, gt=0)
    max_tokens_stage2: int = Field(default=512, gt=0)
    seed: int = 0
    limit: Optional[int] = Field(default=None, gt=0)
    concurrency: int = Field(default=1, ge=1)
    unparseable_policy: UnparseablePolicy = UnparseablePolicy.COUNT_AS_WRONG
    system_preamble: Optional[str] = None
    repeat: int = Field(default=1, ge=1)

    cache_dir: Optional[str] = ".pragmabench_cache"
    out: str = "runs"

    max_attempts: int = Field(default=3, ge=1)
    base_backoff_ms: int = Field(default=500, ge=0)
    backoff_multiplier: float = Field(default=2.0, ge=1.0)
    requests_per_minute: int = Field(default=60, gt=0)
    max_in_flight: int = Field(default=4, gt=0)

    dataset_paths: Dict[str, str] = Field(default_factory=dict)
    providers: Dict[str, ProviderSettings] = Field(default_factory=default_providers)
    model_aliases: Dict[str, ModelAlias] = Field(default_factory=dict)


class ResolvedConfig(BaseModel):
    config: HarnessConfig
    # key -> "flag" | "env" | "file" | "default"
    sources: Dict[str, str]
