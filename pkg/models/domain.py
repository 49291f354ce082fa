"""
Core value types for sarcasm classification runs.

All models are frozen so loaded datasets and computed metrics can be shared
freely between runner workers.
"""

from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Label(str, Enum):
    SARCASTIC = "sarcastic"
    NOT_SARCASTIC = "not_sarcastic"

    def __lt__(self, other):
        if not isinstance(other, Label):
            return NotImplemented
        return _LABEL_ORDER[self] < _LABEL_ORDER[other]

    def swapped(self) -> "Label":
        if self is Label.SARCASTIC:
            return Label.NOT_SARCASTIC
        return Label.SARCASTIC

    @classmethod
    def ordered(cls) -> List["Label"]:
        return sorted(cls)


# Sarcastic < NotSarcastic
_LABEL_ORDER = {Label.SARCASTIC: 0, Label.NOT_SARCASTIC: 1}


class UnparseablePolicy(str, Enum):
    COUNT_AS_WRONG = "count_as_wrong"
    EXCLUDE = "exclude"


class Verdict(BaseModel):
    """Decided(label) when ``label`` is set, otherwise Unparseable(raw_text)."""

    model_config = ConfigDict(frozen=True)

    label: Optional[Label] = None
    raw_text: Optional[str] = None

    @classmethod
    def decided(cls, label: Label) -> "Verdict":
        return cls(label=label)

    @classmethod
    def unparseable(cls, raw_text: str) -> "Verdict":
        return cls(label=None, raw_text=raw_text)

    @property
    def is_decided(self) -> bool:
        return self.label is not None

    def token(self) -> str:
        return self.label.value if self.label is not None else "unparseable"

    def swapped(self) -> "Verdict":
        if self.label is None:
            return self
        return Verdict.decided(self.label.swapped())


class ContextTurn(BaseModel):
    model_config = ConfigDict(frozen=True)

    speaker: str
    text: str


class Sample(BaseModel):
    """One labeled classification instance."""

    model_config = ConfigDict(frozen=True)

    id: str
    dataset_id: str
    utterance: str
    context_turns: List[ContextTurn] = Field(default_factory=list)
    speaker: Optional[str] = None
    gold: Label

    @field_validator("utterance")
    @classmethod
    def _utterance_not_blank(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("utterance must be non-empty after trimming whitespace")
        return value


class ConfusionCounts(BaseModel):
    """Confusion cells with Sarcastic as the positive class."""

    model_config = ConfigDict(frozen=True)

    tp: int = Field(default=0, ge=0)
    fp: int = Field(default=0, ge=0)
    fn: int = Field(default=0, ge=0)
    tn: int = Field(default=0, ge=0)
    unparseable: int = Field(default=0, ge=0)
    policy: UnparseablePolicy = UnparseablePolicy.COUNT_AS_WRONG

    @property
    def scored(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def total_records(self) -> int:
        if self.policy is UnparseablePolicy.EXCLUDE:
            return self.scored + self.unparseable
        return self.scored

    def swapped(self) -> "ConfusionCounts":
        """Counts as seen with NotSarcastic as the positive class."""
        return self.model_copy(
            update={"tp": self.tn, "tn": self.tp, "fp": self.fn, "fn": self.fp}
        )


class MetricsSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    accuracy: float = Field(ge=0.0, le=1.0)
    macro_f1: float = Field(ge=0.0, le=1.0)
    per_class_f1: Dict[Label, float]
    counts: ConfusionCounts
    n: int = Field(ge=0)


class Dataset(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    samples: List[Sample]
    source_path: str = ""
    counts_by_label: Dict[Label, int] = Field(default_factory=dict)

    @model_validator(mode="before")
    @classmethod
    def _fill_counts(cls, data):
        if isinstance(data, dict) and not data.get("counts_by_label"):
            samples = data.get("samples") or []
            counts = {label: 0 for label in Label}
            for sample in samples:
                gold = sample.gold if isinstance(sample, Sample) else sample["gold"]
                counts[Label(gold)] += 1
            data = {**data, "counts_by_label": counts}
        return data

    @model_validator(mode="after")
    def _counts_match_samples(self) -> "Dataset":
        if sum(self.counts_by_label.values()) != len(self.samples):
            raise ValueError("counts_by_label must sum to the number of samples")
        return self

    def __len__(self) -> int:
        return len(self.samples)

    def golds(self) -> Dict[str, Label]:
        return {sample.id: sample.gold for sample in self.samples}
