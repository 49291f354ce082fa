import os
from pathlib import Path

import pytest

from models.config import HarnessConfig
from models.domain import Dataset, Label, Sample
from models.report import MachineFormat, ReportRow, TableLayout
from models.run import StrategyId
from pipeline.errors import ArgumentError, DataError, EmptyReportError, RunIOError
from pipeline.llm_client import build_client
from pipeline.report import (
    CSV_COLUMNS,
    PUBLISHED_NOTE,
    aggregate_repeats,
    collect_rows,
    emit_machine,
    emit_table,
    load_rows,
    parse_structured,
    percent,
    row_from_run_dir,
    summarize,
)
from pipeline.runner import EvaluationRunner, build_manifest

PUBLISHED = Path(os.path.dirname(__file__)).parent / "reference" / "published_table1.jsonl"


def row(
    model="GPT-4o",
    strategy=StrategyId.PMP,
    dataset_id="mustard",
    accuracy=0.5,
    macro_f1=0.5,
    **extra,
):
    return ReportRow(
        model=model,
        strategy=strategy,
        dataset_id=dataset_id,
        accuracy=accuracy,
        macro_f1=macro_f1,
        **extra,
    )


def table_line(table: str, label: str) -> str:
    return next(line for line in table.splitlines() if line.startswith(f"| {label} |"))


class TestPercent:
    @pytest.mark.parametrize(
        "value, expected",
        [(0.8668, "86.68"), (0.5, "50.00"), (1.0, "100.00"), (0.12345, "12.35"), (0.0, "0.00")],
    )
    def test_round_half_up(self, value, expected):
        assert percent(value) == expected


class TestPublishedFixture:
    @pytest.fixture
    def rows(self):
        return load_rows(PUBLISHED)

    def test_fixture_rows(self, rows):
        assert len(rows) == 46
        assert all(r.source == "published" for r in rows)
        assert {r.dataset_id for r in rows} == {"semeval2018t3", "mustard"}

    def test_published_layout_reproduces_headline_cells(self, rows):
        table = emit_table(rows, TableLayout.PUBLISHED)
        lines = table.splitlines()
        assert lines[0] == (
            "| Model | SemEval 2018 Acc. | SemEval 2018 Ma-F1 | MUStARD Acc. | MUStARD Ma-F1 |"
        )
        assert lines[1] == "|---|---:|---:|---:|---:|"
        assert table_line(table, "GPT-4o (PMP)") == (
            "| GPT-4o (PMP) | **86.68** | **83.18** | **79.42** | **77.65** |"
        )
        assert table.rstrip("\n").endswith(PUBLISHED_NOTE)

    def test_rows_follow_model_then_strategy_order(self, rows):
        table = emit_table(rows, TableLayout.PUBLISHED)
        body = [line for line in table.splitlines()[2:] if line.startswith("| ")]
        labels = [line.split(" | ")[0][2:] for line in body]
        gpt = [label for label in labels if label.startswith("GPT-4o (")]
        assert gpt == [
            "GPT-4o (IO)",
            "GPT-4o (CoT)",
            "GPT-4o (ToT)",
            "GPT-4o (BoC)",
            "GPT-4o (CoC)",
            "GPT-4o (GoC)",
            "GPT-4o (PMP)",
        ]

    def test_model_scope_marks_best_per_model(self, rows):
        table = emit_table(rows, TableLayout.PUBLISHED, best_scope="model")
        assert table_line(table, "Claude 3.5 Sonnet (CoC)").startswith(
            "| Claude 3.5 Sonnet (CoC) | **82.27** | **82.23** |"
        )
        assert "**74.78**" in table_line(table, "Claude 3.5 Sonnet (IO)")

    def test_table_scope_marks_only_column_maximum(self, rows):
        table = emit_table(rows, TableLayout.PUBLISHED)
        assert "**" not in table_line(table, "Claude 3.5 Sonnet (CoC)")

    def test_delta_layout(self, rows):
        table = emit_table(rows, TableLayout.DELTA)
        assert "| GPT-4o | SemEval 2018 | 86.68 | GoC | 74.03 | +12.65 |" in table
        assert "| Claude 3.5 Sonnet | SemEval 2018 | 81.50 | CoC | 82.27 | -0.77 |" in table

    def test_csv_export(self, rows):
        text = emit_machine(rows, MachineFormat.CSV)
        lines = text.splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert "GPT-4o,pmp,semeval2018t3,0.866800,0.831800,0,0.000000" in lines
        assert len(lines) == 47


class TestEmitTable:
    def test_empty_rows(self):
        with pytest.raises(EmptyReportError):
            emit_table([])

    def test_bad_best_scope(self):
        with pytest.raises(ArgumentError):
            emit_table([row()], best_scope="column")

    def test_ties_are_all_marked(self):
        table = emit_table(
            [
                row(strategy=StrategyId.IO, accuracy=0.7, macro_f1=0.6),
                row(strategy=StrategyId.PMP, accuracy=0.7, macro_f1=0.65),
            ]
        )
        assert table_line(table, "GPT-4o (IO)") == "| GPT-4o (IO) | **70.00** | 60.00 |"
        assert table_line(table, "GPT-4o (PMP)") == "| GPT-4o (PMP) | **70.00** | **65.00** |"

    def test_missing_cells(self):
        table = emit_table(
            [
                row(strategy=StrategyId.IO, dataset_id="semeval2018t3", accuracy=0.6, macro_f1=0.6),
                row(strategy=StrategyId.PMP, dataset_id="mustard", accuracy=0.8, macro_f1=0.8),
            ]
        )
        assert table_line(table, "GPT-4o (IO)") == "| GPT-4o (IO) | **60.00** | **60.00** | - | - |"
        assert table_line(table, "GPT-4o (PMP)") == (
            "| GPT-4o (PMP) | - | - | **80.00** | **80.00** |"
        )

    def test_mixed_sources_are_labelled(self):
        rows = load_rows(PUBLISHED) + [row(model="GPT-4o", accuracy=0.75, macro_f1=0.7)]
        table = emit_table(rows)
        assert table_line(table, "GPT-4o (PMP)").startswith(
            "| GPT-4o (PMP) | - | - | 75.00 | 70.00 |"
        )
        assert table_line(table, "GPT-4o (PMP) [published]").startswith(
            "| GPT-4o (PMP) [published] | **86.68** |"
        )
        assert PUBLISHED_NOTE in table

    def test_flat_layout(self):
        table = emit_table(
            [row(accuracy=0.75, macro_f1=0.7, n=40, unparseable_rate=0.025)], TableLayout.FLAT
        )
        assert table.splitlines()[2] == "| GPT-4o | PMP | MUStARD | 75.00 | 70.00 | 40 | 2.50 |"

    def test_delta_without_pmp_pairs(self):
        with pytest.raises(EmptyReportError):
            emit_table([row(strategy=StrategyId.IO)], TableLayout.DELTA)

    def test_unknown_dataset_columns_follow_known_ones(self):
        table = emit_table([row(dataset_id="custom"), row(dataset_id="mustard")])
        assert table.splitlines()[0] == (
            "| Model | MUStARD Acc. | MUStARD Ma-F1 | custom Acc. | custom Ma-F1 |"
        )


class TestAggregation:
    def test_repeats_are_averaged(self):
        rows = [
            row(accuracy=0.6, macro_f1=0.5, n=50),
            row(accuracy=0.8, macro_f1=0.7, n=50),
            row(strategy=StrategyId.IO, accuracy=0.4, macro_f1=0.4, n=50),
        ]
        aggregated = aggregate_repeats(rows)
        assert len(aggregated) == 2
        pmp = next(r for r in aggregated if r.strategy is StrategyId.PMP)
        assert pmp.accuracy == pytest.approx(0.7)
        assert pmp.macro_f1 == pytest.approx(0.6)
        assert pmp.n == 50

    def test_published_and_harness_rows_stay_separate(self):
        rows = [row(accuracy=0.6), row(accuracy=0.8, source="published")]
        assert len(aggregate_repeats(rows)) == 2


class TestMachineExport:
    def test_csv_uses_six_decimals(self):
        text = emit_machine([row(accuracy=0.7, macro_f1=2 / 3, n=10, unparseable_rate=0.1)])
        assert text == (
            "model,strategy,dataset,acc,macro_f1,n,unparseable_rate\n"
            "GPT-4o,pmp,mustard,0.700000,0.666667,10,0.100000\n"
        )

    def test_structured_round_trip(self):
        rows = [row(accuracy=0.7), row(strategy=StrategyId.IO, accuracy=0.3)]
        parsed = parse_structured(emit_machine(rows, MachineFormat.STRUCTURED))
        assert sorted(parsed, key=lambda r: r.strategy.order_index()) == [rows[1], rows[0]]

    def test_invalid_structured_line(self):
        with pytest.raises(DataError, match=":2"):
            parse_structured(
                '{"model":"a","strategy":"io","dataset_id":"x","accuracy":0.1,"macro_f1":0.1}\n'
                "not json\n"
            )

    def test_empty_export(self):
        with pytest.raises(EmptyReportError):
            emit_machine([])


class TestRunDirectoryRows:
    @pytest.fixture
    def finished_run(self, tmp_path):
        samples = [
            Sample(
                id=f"s{i}",
                dataset_id="mustard",
                utterance=f"Line {i}",
                speaker="AMY",
                gold=Label.SARCASTIC if i < 2 else Label.NOT_SARCASTIC,
            )
            for i in range(4)
        ]
        dataset = Dataset(id="mustard", samples=samples)
        manifest = build_manifest(
            dataset,
            StrategyId.IO,
            "mock",
            "gpt-4o-2024-05-13",
            template_set="default",
            mock_mode="fixed:sarcastic",
        )
        client = build_client(HarnessConfig(mock="fixed:sarcastic", cache_dir=None), "mock")
        EvaluationRunner(tmp_path).run_evaluation(manifest, dataset, client)
        return tmp_path / manifest.run_id

    def test_row_from_finished_run(self, finished_run):
        report_row = row_from_run_dir(finished_run)
        assert report_row.model == "gpt-4o-2024-05-13"
        assert report_row.strategy is StrategyId.IO
        assert report_row.accuracy == 0.5
        assert report_row.n == 4
        assert report_row.source == "harness"

    def test_unfinished_run(self, finished_run):
        (finished_run / "metrics.json").unlink()
        with pytest.raises(RunIOError, match="not finished"):
            row_from_run_dir(finished_run)

    def test_collect_rows_applies_display_names(self, finished_run):
        rows = collect_rows([finished_run, PUBLISHED], {"gpt-4o-2024-05-13": "GPT-4o"})
        assert len(rows) == 47
        assert rows[0].model == "GPT-4o"

    def test_missing_input(self, tmp_path):
        with pytest.raises(RunIOError):
            collect_rows([tmp_path / "nothing"])


class TestSummarize:
    def test_unknown_sample_id(self):
        from models.domain import Verdict
        from models.run import PredictionRecord, StageTranscript

        record = PredictionRecord(
            sample_id="ghost",
            strategy=StrategyId.IO,
            model="m",
            stage_transcripts=[StageTranscript(prompt="p", response="r")],
            verdict=Verdict.decided(Label.SARCASTIC),
            cached_stages=[False],
        )
        with pytest.raises(DataError, match="ghost"):
            summarize([record], {"s1": Label.SARCASTIC})
