"""
Loaders for the sarcasm benchmarks.

MUStARD ships as one JSON document keyed by utterance id; SemEval-2018 Task 3
(subtask A) ships as a tab-separated file with a header row. Custom corpora use
the normalized interchange format: one JSON Sample per line.
"""

import json
import random
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, StrictBool, ValidationError

from models.domain import ContextTurn, Dataset, Label, Sample
from pipeline.errors import ArgumentError, ConfigurationError, FormatError
from utils.helpers import sha256_hex
from utils.logging import get_pipeline_logger, log_data_operation

logger = get_pipeline_logger("datasets")

MUSTARD_ID = "mustard"
SEMEVAL_ID = "semeval2018t3"

PathLike = Union[str, Path]


class MustardRecord(BaseModel):
    """Fields consumed from one MUStARD entry; extra fields (show, ...) are ignored."""

    model_config = ConfigDict(extra="ignore")

    utterance: str
    speaker: str
    context: List[str]
    context_speakers: List[str]
    sarcasm: StrictBool


def _format_validation_error(error: ValidationError) -> str:
    details = []
    for item in error.errors():
        field = " -> ".join(str(x) for x in item["loc"]) or "record"
        details.append(f"{field}: {item['msg']}")
    return "; ".join(details)


class _JsonObject(list):
    """A JSON object as its (key, value) pairs in source order."""


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FormatError("Dataset file does not exist", path=str(path))
    except UnicodeDecodeError as e:
        raise FormatError(f"Dataset file is not valid UTF-8: {e}", path=str(path))


def load_mustard(path: PathLike, dataset_id: str = MUSTARD_ID) -> Dataset:
    source = Path(path)
    text = _read_text(source)

    try:
        # keep duplicate keys visible to validation instead of silently merging
        document = json.loads(text, object_pairs_hook=_JsonObject)
    except json.JSONDecodeError as e:
        raise FormatError(f"Invalid JSON: {e.msg}", path=str(source), line=e.lineno)

    if not isinstance(document, _JsonObject):
        raise FormatError(
            "Expected a top-level object keyed by utterance id", path=str(source)
        )

    samples: List[Sample] = []
    for key, raw_record in document:
        if not isinstance(raw_record, _JsonObject):
            raise FormatError("Entry must be an object", path=str(source), key=key)
        try:
            record = MustardRecord.model_validate(dict(raw_record))
        except ValidationError as e:
            raise FormatError(
                f"Malformed entry: {_format_validation_error(e)}",
                path=str(source),
                key=key,
            )

        if len(record.context) != len(record.context_speakers):
            raise FormatError(
                f"context has {len(record.context)} turns but context_speakers has "
                f"{len(record.context_speakers)}",
                path=str(source),
                key=key,
            )

        turns = [
            ContextTurn(speaker=speaker, text=turn_text)
            for speaker, turn_text in zip(record.context_speakers, record.context)
        ]
        try:
            samples.append(
                Sample(
                    id=key,
                    dataset_id=dataset_id,
                    utterance=record.utterance,
                    context_turns=turns,
                    speaker=record.speaker,
                    gold=Label.SARCASTIC if record.sarcasm else Label.NOT_SARCASTIC,
                )
            )
        except ValidationError as e:
            raise FormatError(
                f"Invalid sample: {_format_validation_error(e)}",
                path=str(source),
                key=key,
            )

    # stable sort keeps duplicate keys in source order
    samples.sort(key=lambda sample: sample.id)
    log_data_operation(logger, f"Loaded {dataset_id}", len(samples), "samples")
    return Dataset(id=dataset_id, samples=samples, source_path=str(source))


def load_semeval(path: PathLike, dataset_id: str = SEMEVAL_ID) -> Dataset:
    source = Path(path)
    lines = _read_text(source).splitlines()

    if not lines:
        raise FormatError("Missing header line", path=str(source), line=1)

    samples: List[Sample] = []
    for line_number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        # tweet text is the rest of the line, tabs included
        columns = line.split("\t", 2)
        if len(columns) != 3:
            raise FormatError(
                f"Expected 3 tab-separated columns, found {len(columns)}",
                path=str(source),
                line=line_number,
            )
        index, raw_label, tweet = columns
        try:
            label_value = int(raw_label.strip())
        except ValueError:
            raise FormatError(
                f"Label '{raw_label}' is not an integer",
                path=str(source),
                line=line_number,
            )
        if label_value not in (0, 1):
            raise FormatError(
                f"Label {label_value} is outside {{0, 1}}",
                path=str(source),
                line=line_number,
            )
        try:
            samples.append(
                Sample(
                    id=index.strip(),
                    dataset_id=dataset_id,
                    utterance=tweet,
                    gold=Label.SARCASTIC if label_value == 1 else Label.NOT_SARCASTIC,
                )
            )
        except ValidationError as e:
            raise FormatError(
                f"Invalid sample: {_format_validation_error(e)}",
                path=str(source),
                line=line_number,
            )

    log_data_operation(logger, f"Loaded {dataset_id}", len(samples), "samples")
    return Dataset(id=dataset_id, samples=samples, source_path=str(source))


def serialize_sample(sample: Sample) -> str:
    return json.dumps(
        sample.model_dump(mode="json"), ensure_ascii=False, separators=(",", ":")
    )


def dump_interchange(dataset: Dataset) -> str:
    """Normalized interchange text: one Sample per line, UTF-8, trailing newline."""
    return "".join(serialize_sample(sample) + "\n" for sample in dataset.samples)


def write_interchange(dataset: Dataset, path: PathLike) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(dump_interchange(dataset), encoding="utf-8")
    return target


def load_interchange(path: PathLike, dataset_id: Optional[str] = None) -> Dataset:
    source = Path(path)
    samples: List[Sample] = []

    for line_number, line in enumerate(_read_text(source).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            sample = Sample.model_validate_json(line)
        except ValidationError as e:
            raise FormatError(
                f"Invalid record: {_format_validation_error(e)}",
                path=str(source),
                line=line_number,
            )
        if samples and sample.dataset_id != samples[0].dataset_id:
            raise FormatError(
                f"Mixed dataset ids '{samples[0].dataset_id}' and '{sample.dataset_id}'",
                path=str(source),
                line=line_number,
            )
        samples.append(sample)

    if not samples:
        raise FormatError("Interchange file holds no records", path=str(source))

    resolved_id = dataset_id or samples[0].dataset_id
    if dataset_id and dataset_id != samples[0].dataset_id:
        samples = [s.model_copy(update={"dataset_id": dataset_id}) for s in samples]

    log_data_operation(logger, f"Loaded {resolved_id}", len(samples), "samples")
    return Dataset(id=resolved_id, samples=samples, source_path=str(source))


def dataset_digest(dataset: Dataset) -> str:
    """SHA-256 over the interchange serialization; binds runs to exact data."""
    return sha256_hex(dump_interchange(dataset).encode("utf-8"))


def subsample(dataset: Dataset, limit: int, seed: int) -> Dataset:
    size = len(dataset.samples)
    if limit <= 0 or limit > size:
        raise ArgumentError(f"limit must be in 1..{size}, got {limit}")
    if limit == size:
        return dataset

    chosen = sorted(random.Random(seed).sample(range(size), limit))
    return Dataset(
        id=dataset.id,
        samples=[dataset.samples[i] for i in chosen],
        source_path=dataset.source_path,
    )


class DatasetFactory:
    """Maps dataset ids and file extensions to loaders."""

    _loaders: Dict[str, Callable[..., Dataset]] = {}
    _extensions: Dict[str, str] = {}

    @classmethod
    def register_loader(cls, dataset_id: str, loader: Callable[..., Dataset], *extensions: str):
        cls._loaders[dataset_id] = loader
        for extension in extensions:
            cls._extensions[extension] = dataset_id

    @classmethod
    def get_registered_ids(cls) -> List[str]:
        return sorted(cls._loaders.keys())

    @classmethod
    def load(
        cls,
        reference: str,
        dataset_paths: Optional[Dict[str, str]] = None,
        dataset_id: Optional[str] = None,
    ) -> Dataset:
        """
        Resolve ``reference`` (a registered id or a file path) and load it.

        Args:
            reference: Dataset id such as 'mustard', or a path to a dataset file
            dataset_paths: Configured id -> path map used for registered ids
            dataset_id: Optional id override for path-based loads

        Returns:
            Loaded Dataset
        """
        dataset_paths = dataset_paths or {}

        if reference in cls._loaders:
            path = dataset_paths.get(reference)
            if not path:
                raise ConfigurationError(
                    f"No path configured for dataset '{reference}' "
                    f"(set dataset_paths.{reference} in the config file)"
                )
            return cls._loaders[reference](path)

        if reference in dataset_paths:
            return cls.load(dataset_paths[reference], dataset_id=dataset_id or reference)

        path = Path(reference)
        suffix = path.suffix.lower()
        if suffix and suffix not in cls._extensions:
            raise ConfigurationError(f"No loader for '{suffix}' files: {reference}")
        # a bare word is an unknown id; anything path-shaped must exist
        if not path.exists() and (suffix or len(path.parts) > 1):
            raise FormatError("Dataset file does not exist", path=reference)
        if not suffix:
            raise ConfigurationError(
                f"Unknown dataset '{reference}' (registered ids: "
                f"{', '.join(cls.get_registered_ids())})"
            )

        loader = cls._loaders[cls._extensions[suffix]]
        if dataset_id:
            return loader(path, dataset_id=dataset_id)
        return loader(path)


INTERCHANGE_ID = "interchange"

DatasetFactory.register_loader(MUSTARD_ID, load_mustard, ".json")
DatasetFactory.register_loader(SEMEVAL_ID, load_semeval, ".tsv", ".txt")
DatasetFactory.register_loader(INTERCHANGE_ID, load_interchange, ".jsonl")
