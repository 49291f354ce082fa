import json
import threading

import pytest

from models.config import HarnessConfig
from models.domain import Dataset, Label, Sample
from models.llm import CompletionResponse
from models.run import StrategyId
from pipeline.datasets import load_semeval
from pipeline.errors import (
    AuthError,
    ConfigurationError,
    DataError,
    EmptyRunError,
    SmokeCheckError,
)
from pipeline.llm_client import build_client
from pipeline.record_log import RunDirectory
from pipeline.runner import (
    EvaluationRunner,
    RunStage,
    build_manifest,
    make_run_id,
    metrics_line,
    smoke_check,
)


def synthetic_dataset(size: int = 50, dataset_id: str = "semeval2018t3") -> Dataset:
    """Balanced tweets: even indexes sarcastic, odd indexes not."""
    samples = [
        Sample(
            id=f"t{i:03d}",
            dataset_id=dataset_id,
            utterance=f"Synthetic tweet number {i}, what a day",
            gold=Label.SARCASTIC if i % 2 == 0 else Label.NOT_SARCASTIC,
        )
        for i in range(size)
    ]
    return Dataset(id=dataset_id, samples=samples)


def mock_client(dataset: Dataset, mode: str, cache_dir=None):
    config = HarnessConfig(mock=mode, cache_dir=str(cache_dir) if cache_dir else None)
    return build_client(config, "mock", dataset.golds())


def mock_manifest(dataset: Dataset, strategy=StrategyId.PMP, mode="echo-gold", **settings):
    return build_manifest(
        dataset, strategy, "mock", "mock-model", template_set="default", mock_mode=mode, **settings
    )


class UndecidedClient:
    def generate(self, request):
        return CompletionResponse(text="I cannot tell.")


class RejectingClient:
    def __init__(self, fail_after: int):
        self.fail_after = fail_after
        self.calls = 0
        self._lock = threading.Lock()

    def generate(self, request):
        with self._lock:
            self.calls += 1
            calls = self.calls
        if calls > self.fail_after:
            raise AuthError("key revoked", "mock", 401)
        return CompletionResponse(text="VERDICT: SARCASTIC")


class TestManifest:
    def test_run_id_layout(self):
        dataset = synthetic_dataset(4)
        manifest = mock_manifest(dataset)
        prefix = "semeval2018t3__pmp__mock-model__"
        assert manifest.run_id.startswith(prefix)
        assert manifest.run_id[len(prefix):] == manifest.fingerprint()[:10]

    def test_repeat_suffix(self):
        dataset = synthetic_dataset(4)
        manifest = mock_manifest(dataset, repeat=2)
        assert make_run_id(manifest, repeat_total=3).endswith("-r2")
        assert not make_run_id(manifest, repeat_total=1).endswith("-r2")

    def test_concurrency_does_not_change_run_id(self):
        dataset = synthetic_dataset(4)
        assert mock_manifest(dataset, concurrency=1).run_id == mock_manifest(
            dataset, concurrency=8
        ).run_id

    def test_strategy_changes_run_id(self):
        dataset = synthetic_dataset(4)
        assert mock_manifest(dataset).run_id != mock_manifest(dataset, StrategyId.MP).run_id


class TestEvaluationRunner:
    @pytest.fixture
    def dataset(self):
        return synthetic_dataset()

    def test_echo_gold_oracle(self, tmp_path, dataset):
        runner = EvaluationRunner(tmp_path)
        result = runner.run_evaluation(
            mock_manifest(dataset), dataset, mock_client(dataset, "echo-gold")
        )
        assert result.metrics.accuracy == 1.0
        assert result.metrics.macro_f1 == 1.0
        assert result.metrics.n == 50
        assert metrics_line(result.metrics) == (
            "acc=1.000000 macro_f1=1.000000 n=50 unparseable=0"
        )
        assert all(len(r.stage_transcripts) == 2 for r in result.records)
        assert result.manifest.finished_at is not None

    def test_fixed_sarcastic_scores_half(self, tmp_path, dataset):
        runner = EvaluationRunner(tmp_path)
        result = runner.run_evaluation(
            mock_manifest(dataset, mode="fixed:sarcastic"),
            dataset,
            mock_client(dataset, "fixed:sarcastic"),
        )
        assert result.metrics.accuracy == 0.5
        assert metrics_line(result.metrics).startswith("acc=0.500000 ")

    def test_run_directory_contents(self, tmp_path, dataset):
        runner = EvaluationRunner(tmp_path)
        manifest = mock_manifest(dataset, StrategyId.IO)
        runner.run_evaluation(manifest, dataset, mock_client(dataset, "echo-gold"))

        run_dir = RunDirectory(tmp_path / manifest.run_id)
        assert run_dir.read_manifest().run_id == manifest.run_id
        assert run_dir.read_metrics().accuracy == 1.0
        lines = run_dir.records_path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 50
        entry = json.loads(lines[0])
        assert entry["verdict"] in ("sarcastic", "not_sarcastic")
        assert set(entry["timing"]) == {"elapsed_ms", "recorded_at"}

    def test_existing_run_directory_is_refused(self, tmp_path, dataset):
        runner = EvaluationRunner(tmp_path)
        manifest = mock_manifest(dataset, StrategyId.IO)
        runner.run_evaluation(manifest, dataset, mock_client(dataset, "echo-gold"))
        with pytest.raises(ConfigurationError, match="--resume"):
            runner.run_evaluation(manifest, dataset, mock_client(dataset, "echo-gold"))

    def test_limit_uses_seeded_subsample(self, tmp_path, dataset):
        runner = EvaluationRunner(tmp_path)
        result = runner.run_evaluation(
            mock_manifest(dataset, limit=10, seed=3), dataset, mock_client(dataset, "echo-gold")
        )
        ids = [r.sample_id for r in result.records]
        assert len(ids) == 10
        assert ids == sorted(ids)

    def test_resume_skips_recorded_samples(self, tmp_path, dataset):
        runner = EvaluationRunner(tmp_path)
        manifest = mock_manifest(dataset)
        full = runner.run_evaluation(manifest, dataset, mock_client(dataset, "echo-gold"))

        run_dir = RunDirectory(tmp_path / manifest.run_id)
        lines = run_dir.records_path.read_text(encoding="utf-8").splitlines()
        # simulate a crash after 20 samples, mid-way through writing the 21st
        run_dir.records_path.write_text(
            "\n".join(lines[:20]) + "\n" + lines[20][:15] + "\n", encoding="utf-8"
        )
        run_dir.metrics_path.unlink()

        client = mock_client(dataset, "echo-gold")
        resumed = runner.resume(run_dir, dataset, client)

        assert client.providers["mock"].call_count == 30 * 2
        assert resumed.metrics == full.metrics
        assert [r.sample_id for r in resumed.records] == [s.id for s in dataset.samples]

    def test_resume_of_finished_run_makes_no_calls(self, tmp_path, dataset):
        runner = EvaluationRunner(tmp_path)
        manifest = mock_manifest(dataset, StrategyId.IO)
        full = runner.run_evaluation(manifest, dataset, mock_client(dataset, "echo-gold"))

        client = mock_client(dataset, "echo-gold")
        resumed = runner.resume(tmp_path / manifest.run_id, dataset, client)
        assert client.providers["mock"].call_count == 0
        assert resumed.metrics == full.metrics

    def test_resume_rejects_different_dataset(self, tmp_path, dataset):
        runner = EvaluationRunner(tmp_path)
        manifest = mock_manifest(dataset, StrategyId.IO)
        runner.run_evaluation(manifest, dataset, mock_client(dataset, "echo-gold"))

        other = synthetic_dataset(48)
        with pytest.raises(ConfigurationError, match="digest"):
            runner.resume(tmp_path / manifest.run_id, other, mock_client(other, "echo-gold"))

    def test_concurrency_does_not_change_results(self, tmp_path, dataset):
        serial = EvaluationRunner(tmp_path / "serial").run_evaluation(
            mock_manifest(dataset, concurrency=1), dataset, mock_client(dataset, "echo-gold")
        )
        parallel = EvaluationRunner(tmp_path / "parallel").run_evaluation(
            mock_manifest(dataset, concurrency=8), dataset, mock_client(dataset, "echo-gold")
        )
        assert serial.metrics == parallel.metrics
        assert [r.sample_id for r in parallel.records] == [r.sample_id for r in serial.records]

        def masked(result, root):
            entries = RunDirectory(root / result.manifest.run_id).masked_record_lines()
            return sorted(entries, key=lambda entry: entry["sample_id"])

        assert masked(serial, tmp_path / "serial") == masked(parallel, tmp_path / "parallel")

    def test_identical_runs_have_identical_logs(self, tmp_path, dataset):
        results = []
        for name in ("first", "second"):
            runner = EvaluationRunner(tmp_path / name)
            result = runner.run_evaluation(
                mock_manifest(dataset, StrategyId.MP), dataset, mock_client(dataset, "echo-gold")
            )
            results.append(RunDirectory(tmp_path / name / result.manifest.run_id))
        assert results[0].masked_record_lines() == results[1].masked_record_lines()

    def test_warm_cache_rerun_makes_no_provider_calls(self, tmp_path, dataset):
        cache_dir = tmp_path / "cache"
        cold_client = mock_client(dataset, "echo-gold", cache_dir)
        cold = EvaluationRunner(tmp_path / "cold").run_evaluation(
            mock_manifest(dataset), dataset, cold_client
        )
        assert cold_client.providers["mock"].call_count == 100

        warm_client = mock_client(dataset, "echo-gold", cache_dir)
        warm = EvaluationRunner(tmp_path / "warm").run_evaluation(
            mock_manifest(dataset), dataset, warm_client
        )
        assert warm_client.providers["mock"].call_count == 0
        assert warm_client.cache_hits == 100
        assert warm.metrics == cold.metrics
        assert all(r.cached_stages == [True, True] for r in warm.records)

    def test_auth_error_aborts_run(self, tmp_path, dataset):
        runner = EvaluationRunner(tmp_path)
        manifest = mock_manifest(dataset, StrategyId.IO)
        with pytest.raises(AuthError):
            runner.run_evaluation(manifest, dataset, RejectingClient(fail_after=5))
        run_dir = RunDirectory(tmp_path / manifest.run_id)
        assert len(run_dir.read_records()) == 5
        assert run_dir.read_metrics() is None

    def test_script_errors_become_error_records(self, tmp_path, dataset):
        golds = dict(dataset.golds())
        golds.pop("t000")
        client = build_client(HarnessConfig(mock="echo-gold", cache_dir=None), "mock", golds)
        result = EvaluationRunner(tmp_path).run_evaluation(
            mock_manifest(dataset, StrategyId.IO), dataset, client
        )
        failed = result.records[0]
        assert failed.sample_id == "t000"
        assert failed.error.startswith("error[E_MOCK_SCRIPT]")
        assert result.metrics.counts.unparseable == 1
        assert result.metrics.accuracy == pytest.approx(49 / 50)

    def test_duplicate_sample_ids_are_refused(self, tmp_path):
        dataset = Dataset(
            id="mustard",
            samples=[
                Sample(id="x", dataset_id="mustard", utterance="Oh great.", gold=Label.SARCASTIC),
                Sample(
                    id="x", dataset_id="mustard", utterance="Thanks.", gold=Label.NOT_SARCASTIC
                ),
                Sample(id="y", dataset_id="mustard", utterance="Sure.", gold=Label.SARCASTIC),
            ],
        )
        manifest = mock_manifest(dataset)
        client = RejectingClient(fail_after=1000)
        with pytest.raises(DataError, match="duplicate sample ids: x"):
            EvaluationRunner(tmp_path).run_evaluation(manifest, dataset, client)
        assert client.calls == 0
        assert not RunDirectory(tmp_path / manifest.run_id).exists()

    def test_empty_dataset_is_refused_before_writing(self, tmp_path):
        source = tmp_path / "header_only.txt"
        source.write_text("Tweet index\tLabel\tTweet text\n", encoding="utf-8")
        dataset = load_semeval(source)
        manifest = mock_manifest(dataset, StrategyId.IO)
        with pytest.raises(EmptyRunError):
            EvaluationRunner(tmp_path / "runs").run_evaluation(
                manifest, dataset, RejectingClient(fail_after=1000)
            )
        assert not (tmp_path / "runs" / manifest.run_id).exists()

    def test_progress_reaches_complete(self, tmp_path):
        dataset = synthetic_dataset(6)
        stages = []
        runner = EvaluationRunner(tmp_path, progress_callback=lambda p: stages.append(p.stage))
        runner.run_evaluation(
            mock_manifest(dataset, StrategyId.IO), dataset, mock_client(dataset, "echo-gold")
        )
        assert stages[0] is RunStage.PREPARING
        assert stages[-1] is RunStage.COMPLETE
        assert RunStage.EVALUATING in stages


class TestSmokeCheck:
    def test_passes_on_parsed_verdicts(self, tmp_path):
        dataset = synthetic_dataset(20)
        result = EvaluationRunner(tmp_path).run_evaluation(
            mock_manifest(dataset, StrategyId.IO, limit=20),
            dataset,
            mock_client(dataset, "echo-gold"),
        )
        assert smoke_check(result) == 1.0

    def test_fails_below_parse_threshold(self, tmp_path):
        dataset = synthetic_dataset(20)
        result = EvaluationRunner(tmp_path).run_evaluation(
            mock_manifest(dataset, StrategyId.IO, mode=None), dataset, UndecidedClient()
        )
        with pytest.raises(SmokeCheckError, match="Parse rate"):
            smoke_check(result)
