"""
Prompting strategies: rendering, one- or two-call execution, verdict parsing.

Single-call strategies (IO, CoT, ToT, BoC, CoC, GoC) send one prompt that ends
with the verdict-format instruction. Metacognitive strategies (MP, PMP) send a
first-stage analysis prompt and then a reflection prompt that embeds the first
response verbatim; only the reflection carries the verdict instruction.
"""

import re
import time
from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Type

from models.domain import Label, Sample, Verdict
from models.llm import ChatMessage, ChatRole, CompletionRequest
from models.run import PredictionRecord, PromptBundle, RunManifest, StageTranscript, StrategyId
from pipeline.errors import ArgumentError, AuthError, ConfigurationError, ProviderError, ScriptError
from pipeline.llm_client import CompletionClient
from pipeline.templates import (
    TemplateStore,
    default_store,
    render_template,
    sample_values,
    with_verdict_instruction,
)
from utils.logging import get_pipeline_logger, log_error_with_context

logger = get_pipeline_logger("strategies")

SAMPLE_TAG_TEMPLATE = "[[sample:{sample_id}]]"

# Verdict parsing
_MARKER = re.compile(r"verdict\s*:", re.IGNORECASE)
_NEGATED_SARCASTIC = re.compile(r"(?:\bnot|\bnon|n't)[\s_-]*sarcastic", re.IGNORECASE)
_SARCASTIC = re.compile(r"sarcastic", re.IGNORECASE)
_NEGATED_IRONIC = re.compile(r"(?:\bnot|\bnon|n't)[\s_-]*ironic", re.IGNORECASE)
_IRONIC = re.compile(r"ironic", re.IGNORECASE)
TAIL_LINES = 3


def _store(store: Optional[TemplateStore]) -> TemplateStore:
    return store if store is not None else default_store()


def render_first_stage(
    strategy: StrategyId,
    sample: Sample,
    dataset_id: str,
    store: Optional[TemplateStore] = None,
) -> str:
    template = _store(store).first_stage(strategy, dataset_id)
    return render_template(template, sample_values(sample))


def render_reflect_stage(
    strategy: StrategyId, stage1_analysis: str, store: Optional[TemplateStore] = None
) -> str:
    if not strategy.is_two_stage:
        raise ArgumentError(f"{strategy.display} has no reflection stage")
    if not stage1_analysis or not stage1_analysis.strip():
        raise ArgumentError("Stage-1 analysis must be non-empty")
    template = _store(store).reflect_stage(strategy)
    return with_verdict_instruction(render_template(template, {"analysis": stage1_analysis}))


def render_pmp_stage1(
    sample: Sample, dataset_id: str, store: Optional[TemplateStore] = None
) -> str:
    return render_first_stage(StrategyId.PMP, sample, dataset_id, store)


def render_pmp_stage2(stage1_analysis: str, store: Optional[TemplateStore] = None) -> str:
    return render_reflect_stage(StrategyId.PMP, stage1_analysis, store)


def render_baseline(
    strategy: StrategyId,
    sample: Sample,
    dataset_id: str,
    store: Optional[TemplateStore] = None,
) -> str:
    if strategy.is_two_stage:
        raise ArgumentError(
            f"{strategy.display} is a two-stage strategy; use the stage renderers"
        )
    return with_verdict_instruction(render_first_stage(strategy, sample, dataset_id, store))


def build_prompt_bundle(
    strategy: StrategyId,
    sample: Sample,
    dataset_id: str,
    system_preamble: Optional[str] = None,
    store: Optional[TemplateStore] = None,
) -> PromptBundle:
    """All prompts for one sample; stage2 keeps its ``{{analysis}}`` slot."""
    if strategy.is_two_stage:
        return PromptBundle(
            stage1=render_first_stage(strategy, sample, dataset_id, store),
            stage2=with_verdict_instruction(_store(store).reflect_stage(strategy)),
            system_preamble=system_preamble,
        )
    return PromptBundle(
        stage1=render_baseline(strategy, sample, dataset_id, store),
        system_preamble=system_preamble,
    )


def _decide_from(text: str, negation: re.Pattern, positive: re.Pattern) -> Optional[Label]:
    if negation.search(text):
        return Label.NOT_SARCASTIC
    if positive.search(text):
        return Label.SARCASTIC
    return None


def parse_verdict(final_text: str) -> Verdict:
    """
    Extract the label from a final-stage response. Total; never raises.

    1. The last line carrying a ``VERDICT:`` marker decides, negation first.
    2. Otherwise the last three non-empty lines are scanned, negation first;
       "ironic" is consulted only when "sarcastic" does not appear.
    3. Otherwise the verdict is Unparseable, keeping the raw text.
    """
    text = final_text or ""
    lines = text.splitlines()

    marker_lines = [line for line in lines if _MARKER.search(line)]
    if marker_lines:
        last = marker_lines[-1]
        tail = _MARKER.split(last)[-1]
        label = _decide_from(tail, _NEGATED_SARCASTIC, _SARCASTIC)
        if label is not None:
            return Verdict.decided(label)

    non_empty = [line for line in lines if line.strip()]
    window = "\n".join(non_empty[-TAIL_LINES:])
    label = _decide_from(window, _NEGATED_SARCASTIC, _SARCASTIC)
    if label is None:
        label = _decide_from(window, _NEGATED_IRONIC, _IRONIC)
    if label is not None:
        return Verdict.decided(label)

    return Verdict.unparseable(text)


class PromptingStrategy(ABC):
    """Executes one StrategyId for a single sample."""

    strategy_id: StrategyId

    def __init__(self, store: Optional[TemplateStore] = None):
        self.store = _store(store)

    @abstractmethod
    def stage_prompts(self, sample: Sample, dataset_id: str) -> PromptBundle:
        pass

    def execute(
        self, sample: Sample, client: CompletionClient, run_config: RunManifest
    ) -> PredictionRecord:
        # rendering first: template problems surface before any provider call
        bundle = self.stage_prompts(sample, run_config.dataset_id)
        tag = SAMPLE_TAG_TEMPLATE.format(sample_id=sample.id) if run_config.mock_mode else None

        transcripts: List[StageTranscript] = []
        cached: List[bool] = []
        prompt_tokens = completion_tokens = 0
        started = time.monotonic()
        stage_count = self.strategy_id.stage_count

        for stage_index in range(stage_count):
            if stage_index == 0:
                prompt = bundle.stage1
            else:
                prompt = render_template(bundle.stage2, {"analysis": transcripts[0].response})
            if tag:
                prompt = f"{tag}\n{prompt}"

            preamble = bundle.system_preamble or run_config.system_preamble
            request = self._request(prompt, run_config, stage_index, preamble)
            try:
                response = client.generate(request)
            except AuthError:
                raise
            except (ProviderError, ScriptError) as e:
                log_error_with_context(
                    logger,
                    e,
                    f"stage {stage_index + 1} completion",
                    {
                        "sample_id": sample.id,
                        "strategy": self.strategy_id.value,
                        "provider": run_config.provider_id,
                    },
                )
                transcripts.append(StageTranscript(prompt=prompt, response=""))
                cached.append(False)
                # unrun stages keep an empty slot
                while len(transcripts) < stage_count:
                    transcripts.append(StageTranscript(prompt="", response=""))
                    cached.append(False)
                return PredictionRecord(
                    sample_id=sample.id,
                    strategy=self.strategy_id,
                    model=run_config.model,
                    stage_transcripts=transcripts,
                    verdict=Verdict.unparseable(""),
                    cached_stages=cached,
                    elapsed_ms=_elapsed_ms(started),
                    error=e.token(),
                    prompt_tokens=prompt_tokens,
                    completion_tokens=completion_tokens,
                )

            transcripts.append(StageTranscript(prompt=prompt, response=response.text))
            cached.append(response.from_cache)
            prompt_tokens += response.prompt_tokens or 0
            completion_tokens += response.completion_tokens or 0

        return PredictionRecord(
            sample_id=sample.id,
            strategy=self.strategy_id,
            model=run_config.model,
            stage_transcripts=transcripts,
            verdict=parse_verdict(transcripts[-1].response),
            cached_stages=cached,
            elapsed_ms=_elapsed_ms(started),
            prompt_tokens=prompt_tokens,
            completion_tokens=completion_tokens,
        )

    @staticmethod
    def _request(
        prompt: str,
        run_config: RunManifest,
        stage_index: int,
        system_preamble: Optional[str],
    ) -> CompletionRequest:
        messages = []
        if system_preamble:
            messages.append(ChatMessage(role=ChatRole.SYSTEM, content=system_preamble))
        messages.append(ChatMessage(role=ChatRole.USER, content=prompt))
        return CompletionRequest(
            provider_id=run_config.provider_id,
            model=run_config.model,
            messages=messages,
            temperature=run_config.temperature,
            max_tokens=run_config.max_tokens_for_stage(stage_index),
        )


def _elapsed_ms(started: float) -> int:
    return int((time.monotonic() - started) * 1000)


class SingleCallStrategy(PromptingStrategy):
    def __init__(self, strategy_id: StrategyId, store: Optional[TemplateStore] = None):
        if strategy_id.is_two_stage:
            raise ArgumentError(f"{strategy_id.display} is not a single-call strategy")
        self.strategy_id = strategy_id
        super().__init__(store)

    def stage_prompts(self, sample: Sample, dataset_id: str) -> PromptBundle:
        return PromptBundle(
            stage1=render_baseline(self.strategy_id, sample, dataset_id, self.store)
        )


class MetacognitiveStrategy(PromptingStrategy):
    """Analysis call followed by a separate reflection call (MP, PMP)."""

    def __init__(self, strategy_id: StrategyId, store: Optional[TemplateStore] = None):
        if not strategy_id.is_two_stage:
            raise ArgumentError(f"{strategy_id.display} is not a two-stage strategy")
        self.strategy_id = strategy_id
        super().__init__(store)

    def stage_prompts(self, sample: Sample, dataset_id: str) -> PromptBundle:
        return build_prompt_bundle(self.strategy_id, sample, dataset_id, store=self.store)


class StrategyFactory:
    _strategies: Dict[StrategyId, Type[PromptingStrategy]] = {}

    @classmethod
    def register_strategy(cls, strategy_id: StrategyId, strategy_class: Type[PromptingStrategy]):
        cls._strategies[strategy_id] = strategy_class

    @classmethod
    def create_strategy(
        cls, strategy_id: StrategyId, store: Optional[TemplateStore] = None
    ) -> PromptingStrategy:
        if strategy_id not in cls._strategies:
            raise ConfigurationError(f"Unknown prompting strategy: {strategy_id}")
        return cls._strategies[strategy_id](strategy_id, store)

    @classmethod
    def get_available_strategies(cls) -> List[StrategyId]:
        return sorted(cls._strategies.keys(), key=StrategyId.order_index)


def execute_strategy(
    strategy: StrategyId,
    sample: Sample,
    client: CompletionClient,
    run_config: RunManifest,
    store: Optional[TemplateStore] = None,
) -> PredictionRecord:
    return StrategyFactory.create_strategy(strategy, store).execute(sample, client, run_config)


for _strategy_id in StrategyId:
    StrategyFactory.register_strategy(
        _strategy_id,
        MetacognitiveStrategy if _strategy_id.is_two_stage else SingleCallStrategy,
    )
