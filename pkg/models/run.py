import hashlib
import json
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.domain import Label, MetricsSummary, UnparseablePolicy, Verdict
from pipeline.errors import ConfigurationError


class StrategyId(str, Enum):
    IO = "io"
    COT = "cot"
    TOT = "tot"
    BOC = "boc"
    COC = "coc"
    GOC = "goc"
    MP = "mp"
    PMP = "pmp"

    @property
    def display(self) -> str:
        return _DISPLAY_NAMES[self]

    @property
    def is_two_stage(self) -> bool:
        return self in (StrategyId.MP, StrategyId.PMP)

    @property
    def stage_count(self) -> int:
        return 2 if self.is_two_stage else 1

    @classmethod
    def parse(cls, token: str) -> "StrategyId":
        normalized = token.strip().lower()
        if normalized == "toc":
            raise ConfigurationError(
                "Tensor of Cues (toc) requires explicit model training and is out "
                "of scope for a prompting-only harness"
            )
        for member in cls:
            if normalized in (member.value, member.display.lower()):
                return member
        valid = ", ".join(member.value for member in cls)
        raise ConfigurationError(f"Unknown strategy '{token}' (expected one of: {valid})")

    def order_index(self) -> int:
        return list(StrategyId).index(self)


_DISPLAY_NAMES = {
    StrategyId.IO: "IO",
    StrategyId.COT: "CoT",
    StrategyId.TOT: "ToT",
    StrategyId.BOC: "BoC",
    StrategyId.COC: "CoC",
    StrategyId.GOC: "GoC",
    StrategyId.MP: "MP",
    StrategyId.PMP: "PMP",
}


class PromptBundle(BaseModel):
    """Rendered prompts for one sample; ``stage2`` keeps its ``{{analysis}}`` slot."""

    model_config = ConfigDict(frozen=True)

    stage1: str
    stage2: Optional[str] = None
    system_preamble: Optional[str] = None

    @model_validator(mode="after")
    def _stage1_present(self) -> "PromptBundle":
        if not self.stage1:
            raise ValueError("stage1 prompt must be non-empty")
        return self


class StageTranscript(BaseModel):
    model_config = ConfigDict(frozen=True)

    prompt: str
    response: str


class PredictionRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    sample_id: str
    strategy: StrategyId
    model: str
    stage_transcripts: List[StageTranscript]
    verdict: Verdict
    cached_stages: List[bool]
    elapsed_ms: int = Field(default=0, ge=0)
    error: Optional[str] = None
    prompt_tokens: int = 0
    completion_tokens: int = 0

    @model_validator(mode="after")
    def _one_or_two_stages(self) -> "PredictionRecord":
        if len(self.stage_transcripts) not in (1, 2):
            raise ValueError("stage_transcripts must hold one or two stages")
        if len(self.cached_stages) != len(self.stage_transcripts):
            raise ValueError("cached_stages must align with stage_transcripts")
        return self

    def to_log_dict(self, recorded_at: Optional[str] = None) -> Dict[str, Any]:
        """Record-log form: verdict as a token, timing in a sidecar object."""
        payload = self.model_dump(mode="json", exclude={"verdict", "elapsed_ms"})
        payload["verdict"] = self.verdict.token()
        payload["timing"] = {"elapsed_ms": self.elapsed_ms, "recorded_at": recorded_at}
        return payload

    @classmethod
    def from_log_dict(cls, payload: Dict[str, Any]) -> "PredictionRecord":
        data = dict(payload)
        timing = data.pop("timing", None) or {}
        token = data.pop("verdict")
        if token == "unparseable":
            transcripts = data.get("stage_transcripts") or []
            raw = transcripts[-1]["response"] if transcripts else ""
            verdict = Verdict.unparseable(raw)
        else:
            verdict = Verdict.decided(Label(token))
        data["verdict"] = verdict
        data["elapsed_ms"] = timing.get("elapsed_ms", 0)
        return cls.model_validate(data)


_IDENTITY_EXCLUDE = {"run_id", "started_at", "finished_at", "harness_version"}


class RunManifest(BaseModel):
    """Frozen description of one evaluation run."""

    model_config = ConfigDict(frozen=True)

    run_id: str
    dataset_id: str
    dataset_digest: str
    strategy: StrategyId
    provider_id: str
    model: str
    template_set: str
    temperature: float = Field(default=0.0, ge=0.0)
    max_tokens_stage1: int = Field(default=1024, gt=0)
    max_tokens_stage2: int = Field(default=512, gt=0)
    seed: int = 0
    limit: Optional[int] = None
    concurrency: int = Field(default=1, ge=1)
    unparseable_policy: UnparseablePolicy = UnparseablePolicy.COUNT_AS_WRONG
    system_preamble: Optional[str] = None
    mock_mode: Optional[str] = None
    repeat: int = Field(default=1, ge=1)
    started_at: Optional[datetime] = None
    finished_at: Optional[datetime] = None
    harness_version: str = ""

    def fingerprint(self) -> str:
        """Digest of every field that changes what the run computes."""
        identity = self.model_dump(mode="json", exclude=_IDENTITY_EXCLUDE)
        # concurrency does not change results
        identity.pop("concurrency", None)
        canonical = json.dumps(identity, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def max_tokens_for_stage(self, stage_index: int) -> int:
        return self.max_tokens_stage1 if stage_index == 0 else self.max_tokens_stage2


class RunResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    manifest: RunManifest
    records: List[PredictionRecord]
    metrics: MetricsSummary
