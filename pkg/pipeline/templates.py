"""
Prompt template loading and rendering.

Templates are plain-text files named ``<strategy>_<dataset>.txt`` (first stage)
and ``<strategy>_reflect.txt`` (second stage) inside a template-set directory.
Placeholders use ``{{name}}`` syntax and are substituted in a single pass, so
text inserted for one placeholder is never re-scanned for another.
"""

import re
import threading
from pathlib import Path
from typing import Dict, List, Optional

from models.domain import Sample
from models.run import StrategyId
from pipeline.errors import ConfigurationError
from utils.logging import get_pipeline_logger

logger = get_pipeline_logger("templates")

TEMPLATES_ROOT = Path(__file__).parent / "prompt_templates"
DEFAULT_TEMPLATE_SET = "default"

NO_CONTEXT = "(no prior context)"
REFLECT_SUFFIX = "reflect"
VERDICT_INSTRUCTION = (
    'End your answer with one line: "VERDICT: SARCASTIC" or "VERDICT: NOT SARCASTIC".'
)

PLACEHOLDER_PATTERN = re.compile(r"\{\{(\w+)\}\}")


def render_template(template: str, values: Dict[str, str]) -> str:
    def substitute(match: re.Match) -> str:
        name = match.group(1)
        if name not in values:
            raise ConfigurationError(f"Template placeholder '{{{{{name}}}}}' has no value")
        return values[name]

    return PLACEHOLDER_PATTERN.sub(substitute, template)


def render_context(sample: Sample) -> str:
    """``SPEAKER: text`` per turn in source order."""
    if not sample.context_turns:
        return NO_CONTEXT
    return "\n".join(f"{turn.speaker}: {turn.text}" for turn in sample.context_turns)


def sample_values(sample: Sample) -> Dict[str, str]:
    return {
        "context": render_context(sample),
        "speaker": f"{sample.speaker}: " if sample.speaker else "",
        "utterance": sample.utterance,
    }


def with_verdict_instruction(prompt: str) -> str:
    return f"{prompt}\n\n{VERDICT_INSTRUCTION}"


class TemplateStore:
    """Reads and caches one template set; safe to share between workers."""

    def __init__(self, template_set: Optional[str] = None):
        self.template_set = template_set or DEFAULT_TEMPLATE_SET
        self.directory = self._resolve_directory(self.template_set)
        self._cache: Dict[str, str] = {}
        self._lock = threading.Lock()

    @staticmethod
    def _resolve_directory(template_set: str) -> Path:
        bundled = TEMPLATES_ROOT / template_set
        if bundled.is_dir():
            return bundled
        custom = Path(template_set)
        if custom.is_dir():
            return custom
        raise ConfigurationError(
            f"Template set '{template_set}' is neither a bundled set nor a directory"
        )

    def _load(self, name: str) -> str:
        with self._lock:
            if name in self._cache:
                return self._cache[name]

        path = self.directory / f"{name}.txt"
        if not path.is_file():
            raise ConfigurationError(
                f"No template '{name}' in template set '{self.template_set}'"
            )
        text = path.read_text(encoding="utf-8").rstrip("\n")
        logger.debug(f"Loaded template {path}")

        with self._lock:
            self._cache[name] = text
        return text

    def has_template(self, name: str) -> bool:
        return (self.directory / f"{name}.txt").is_file()

    def registered_datasets(self, strategy: StrategyId = StrategyId.PMP) -> List[str]:
        prefix = f"{strategy.value}_"
        return sorted(
            path.stem[len(prefix):]
            for path in self.directory.glob(f"{prefix}*.txt")
            if path.stem != f"{prefix}{REFLECT_SUFFIX}"
        )

    def first_stage(self, strategy: StrategyId, dataset_id: str) -> str:
        name = f"{strategy.value}_{dataset_id}"
        if not self.has_template(name):
            registered = ", ".join(self.registered_datasets(strategy)) or "none"
            raise ConfigurationError(
                f"Dataset '{dataset_id}' has no {strategy.display} template "
                f"(registered: {registered})"
            )
        return self._load(name)

    def reflect_stage(self, strategy: StrategyId) -> str:
        return self._load(f"{strategy.value}_{REFLECT_SUFFIX}")


_default_store: Optional[TemplateStore] = None


def default_store() -> TemplateStore:
    global _default_store
    if _default_store is None:
        _default_store = TemplateStore(DEFAULT_TEMPLATE_SET)
    return _default_store
