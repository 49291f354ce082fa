"""
Comparison tables and machine-readable exports over finished runs.

Tables render percentages (round-half-up, 2 decimals) from the raw fractions;
exports keep 6-decimal fractions, so no value is rounded twice.
"""

import json
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import pandas as pd
from pydantic import ValidationError

from models.domain import Label, MetricsSummary, UnparseablePolicy
from models.report import MachineFormat, ReportRow, TableLayout
from models.run import PredictionRecord, StrategyId
from pipeline.datasets import MUSTARD_ID, SEMEVAL_ID
from pipeline.errors import ArgumentError, DataError, EmptyReportError, RunIOError
from pipeline.metrics import confusion_counts, summarize_counts
from pipeline.record_log import RunDirectory

DATASET_ORDER = [SEMEVAL_ID, MUSTARD_ID]
DATASET_TITLES = {SEMEVAL_ID: "SemEval 2018", MUSTARD_ID: "MUStARD"}
METRIC_TITLES = {"accuracy": "Acc.", "macro_f1": "Ma-F1"}
CSV_COLUMNS = ["model", "strategy", "dataset", "acc", "macro_f1", "n", "unparseable_rate"]
BEST_MARKER = "**"
MISSING_CELL = "-"
PUBLISHED_NOTE = "_Rows from published results are reference values, not harness output._"

PathLike = Union[str, Path]


def summarize(
    records: Sequence[PredictionRecord],
    golds: Dict[str, Label],
    policy: UnparseablePolicy = UnparseablePolicy.COUNT_AS_WRONG,
) -> MetricsSummary:
    pairs = []
    for record in records:
        if record.sample_id not in golds:
            raise DataError(f"Record for unknown sample id '{record.sample_id}'")
        pairs.append((golds[record.sample_id], record.verdict))
    return summarize_counts(confusion_counts(pairs, policy))


def percent(value: float) -> str:
    """100 x value, round-half-up to 2 decimals."""
    scaled = Decimal(str(value)) * 100
    return str(scaled.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _dataset_rank(dataset_id: str):
    if dataset_id in DATASET_ORDER:
        return (DATASET_ORDER.index(dataset_id), "")
    return (len(DATASET_ORDER), dataset_id)


def _dataset_title(dataset_id: str) -> str:
    return DATASET_TITLES.get(dataset_id, dataset_id)


def _sort_key(row: ReportRow):
    return (row.model, row.strategy.order_index(), _dataset_rank(row.dataset_id), row.source)


def _frame(rows: Iterable[ReportRow]) -> pd.DataFrame:
    records = []
    for row in rows:
        entry = row.model_dump()
        entry["strategy"] = row.strategy.value
        entry["strategy_order"] = row.strategy.order_index()
        records.append(entry)
    return pd.DataFrame.from_records(records)


def aggregate_repeats(rows: Sequence[ReportRow]) -> List[ReportRow]:
    """Average rows sharing (model, strategy, dataset, source), e.g. repeated runs."""
    if not rows:
        return []
    frame = _frame(rows)
    grouped = frame.groupby(
        ["model", "strategy", "dataset_id", "source"], sort=False, as_index=False
    ).agg(
        accuracy=("accuracy", "mean"),
        macro_f1=("macro_f1", "mean"),
        n=("n", "max"),
        unparseable_rate=("unparseable_rate", "mean"),
    )
    aggregated = [
        ReportRow(
            model=item["model"],
            strategy=StrategyId(item["strategy"]),
            dataset_id=item["dataset_id"],
            accuracy=float(item["accuracy"]),
            macro_f1=float(item["macro_f1"]),
            n=int(item["n"]),
            unparseable_rate=float(item["unparseable_rate"]),
            source=item["source"],
        )
        for item in grouped.to_dict("records")
    ]
    return sorted(aggregated, key=_sort_key)


def _markdown_row(cells: List[str]) -> str:
    return "| " + " | ".join(cells) + " |"


def _row_label(model: str, strategy: str, source: str, mixed_sources: bool) -> str:
    label = f"{model} ({StrategyId(strategy).display})"
    if mixed_sources and source != "harness":
        label = f"{label} [{source}]"
    return label


def _published_table(rows: List[ReportRow], best_scope: str) -> str:
    frame = _frame(rows)
    datasets = sorted(frame["dataset_id"].unique(), key=_dataset_rank)
    mixed_sources = frame["source"].nunique() > 1

    table = frame.pivot_table(
        index=["model", "strategy_order", "strategy", "source"],
        columns="dataset_id",
        values=["accuracy", "macro_f1"],
        aggfunc="first",
    ).sort_index()

    columns = [(metric, dataset) for dataset in datasets for metric in METRIC_TITLES]
    marks = {}
    for column in columns:
        values = table[column]
        if best_scope == "model":
            best = values.groupby(level="model").transform("max")
        else:
            best = pd.Series(values.max(), index=values.index)
        mask = (values == best) & values.notna()
        marks[column] = set(values.index[mask])

    header = ["Model"] + [
        f"{_dataset_title(dataset)} {METRIC_TITLES[metric]}" for metric, dataset in columns
    ]
    lines = [
        _markdown_row(header),
        "|" + "---|" + "---:|" * len(columns),
    ]
    for index, row_values in table.iterrows():
        model, _, strategy, source = index
        cells = [_row_label(model, strategy, source, mixed_sources)]
        for column in columns:
            value = row_values[column]
            if pd.isna(value):
                cells.append(MISSING_CELL)
                continue
            text = percent(float(value))
            if index in marks[column]:
                text = f"{BEST_MARKER}{text}{BEST_MARKER}"
            cells.append(text)
        lines.append(_markdown_row(cells))

    if (frame["source"] == "published").any():
        lines.extend(["", PUBLISHED_NOTE])
    return "\n".join(lines) + "\n"


def _flat_table(rows: List[ReportRow]) -> str:
    lines = [
        _markdown_row(["Model", "Strategy", "Dataset", "Acc.", "Ma-F1", "n", "Unparseable"]),
        "|---|---|---|---:|---:|---:|---:|",
    ]
    for row in rows:
        lines.append(
            _markdown_row(
                [
                    row.model,
                    row.strategy.display,
                    _dataset_title(row.dataset_id),
                    percent(row.accuracy),
                    percent(row.macro_f1),
                    str(row.n),
                    percent(row.unparseable_rate),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _signed_points(delta: Decimal) -> str:
    points = (delta * 100).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    return f"+{points}" if points > 0 else str(points)


def _delta_table(rows: List[ReportRow]) -> str:
    """PMP against the best other strategy (by accuracy) per model and dataset."""
    lines = [
        _markdown_row(
            [
                "Model",
                "Dataset",
                "PMP Acc.",
                "Best other",
                "Other Acc.",
                "Delta Acc.",
                "PMP Ma-F1",
                "Other Ma-F1",
                "Delta Ma-F1",
            ]
        ),
        "|---|---|---:|---|---:|---:|---:|---:|---:|",
    ]
    groups: Dict[tuple, List[ReportRow]] = {}
    for row in rows:
        key = (row.model, _dataset_rank(row.dataset_id), row.dataset_id)
        groups.setdefault(key, []).append(row)

    emitted = 0
    for (model, _, dataset_id), group in sorted(groups.items(), key=lambda item: item[0][:2]):
        pmp = [row for row in group if row.strategy is StrategyId.PMP]
        others = [row for row in group if row.strategy is not StrategyId.PMP]
        if not pmp or not others:
            continue
        target = pmp[0]
        best = max(others, key=lambda row: (row.accuracy, -row.strategy.order_index()))
        lines.append(
            _markdown_row(
                [
                    model,
                    _dataset_title(dataset_id),
                    percent(target.accuracy),
                    best.strategy.display,
                    percent(best.accuracy),
                    _signed_points(Decimal(str(target.accuracy)) - Decimal(str(best.accuracy))),
                    percent(target.macro_f1),
                    percent(best.macro_f1),
                    _signed_points(Decimal(str(target.macro_f1)) - Decimal(str(best.macro_f1))),
                ]
            )
        )
        emitted += 1

    if emitted == 0:
        raise EmptyReportError("Delta layout needs PMP and at least one other strategy per model")
    return "\n".join(lines) + "\n"


def emit_table(
    rows: Sequence[ReportRow],
    layout: TableLayout = TableLayout.PUBLISHED,
    best_scope: str = "table",
) -> str:
    if not rows:
        raise EmptyReportError("No report rows to render")
    if best_scope not in ("table", "model"):
        raise ArgumentError(f"best_scope must be 'table' or 'model', got '{best_scope}'")

    aggregated = aggregate_repeats(rows)
    if layout is TableLayout.PUBLISHED:
        return _published_table(aggregated, best_scope)
    if layout is TableLayout.FLAT:
        return _flat_table(aggregated)
    return _delta_table(aggregated)


def emit_machine(rows: Sequence[ReportRow], format: MachineFormat = MachineFormat.CSV) -> str:
    if not rows:
        raise EmptyReportError("No report rows to export")
    ordered = sorted(rows, key=_sort_key)

    if format is MachineFormat.STRUCTURED:
        return "".join(row.model_dump_json() + "\n" for row in ordered)

    frame = pd.DataFrame(
        [
            {
                "model": row.model,
                "strategy": row.strategy.value,
                "dataset": row.dataset_id,
                "acc": row.accuracy,
                "macro_f1": row.macro_f1,
                "n": row.n,
                "unparseable_rate": row.unparseable_rate,
            }
            for row in ordered
        ],
        columns=CSV_COLUMNS,
    )
    return frame.to_csv(index=False, float_format="%.6f", lineterminator="\n")


def parse_structured(text: str, source: str = "<input>") -> List[ReportRow]:
    rows = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(ReportRow.model_validate(json.loads(line)))
        except (ValueError, ValidationError) as e:
            raise DataError(f"Invalid report row at {source}:{line_number}: {e}")
    return rows


def load_rows(path: PathLike) -> List[ReportRow]:
    """Rows from a structured export or the published-results fixture."""
    source = Path(path)
    try:
        text = source.read_text(encoding="utf-8")
    except OSError as e:
        raise RunIOError(f"Cannot read report rows from {source}: {e}")
    return parse_structured(text, str(source))


def row_from_run_dir(path: PathLike) -> ReportRow:
    run_dir = RunDirectory(path)
    if not run_dir.path.is_dir():
        raise RunIOError(f"Run directory {run_dir.path} does not exist")
    manifest = run_dir.read_manifest()
    metrics = run_dir.read_metrics()
    if metrics is None:
        raise RunIOError(f"Run {manifest.run_id} has no metrics; it has not finished")

    total = metrics.counts.total_records
    return ReportRow(
        model=manifest.model,
        strategy=manifest.strategy,
        dataset_id=manifest.dataset_id,
        accuracy=metrics.accuracy,
        macro_f1=metrics.macro_f1,
        n=metrics.n,
        unparseable_rate=metrics.counts.unparseable / total if total else 0.0,
    )


def collect_rows(
    inputs: Sequence[PathLike], model_label: Optional[Dict[str, str]] = None
) -> List[ReportRow]:
    """Rows from run directories and row files; ``model_label`` renames provider model ids."""
    rows: List[ReportRow] = []
    for item in inputs:
        path = Path(item)
        if path.is_dir():
            rows.append(row_from_run_dir(path))
        elif path.is_file():
            rows.extend(load_rows(path))
        else:
            raise RunIOError(f"Report input {path} does not exist")

    if model_label:
        rows = [
            row.model_copy(update={"model": model_label.get(row.model, row.model)})
            for row in rows
        ]
    return rows
