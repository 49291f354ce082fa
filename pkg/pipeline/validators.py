from collections import Counter
from typing import Dict, List

from models.domain import Dataset, Label


class ValidationReport:
    """Container for dataset validation results with detailed error reporting."""

    def __init__(self, dataset_id: str):
        self.dataset_id = dataset_id
        self.duplicate_ids: List[str] = []
        self.empty_utterances: List[str] = []
        self.class_balance: Dict[Label, int] = {label: 0 for label in Label.ordered()}
        self.validation_summary: Dict[str, int] = {
            "total_samples": 0,
            "duplicate_ids": 0,
            "empty_utterances": 0,
        }

    def add_duplicate(self, sample_id: str) -> None:
        self.duplicate_ids.append(sample_id)
        self.validation_summary["duplicate_ids"] += 1

    def add_empty_utterance(self, sample_id: str) -> None:
        self.empty_utterances.append(sample_id)
        self.validation_summary["empty_utterances"] += 1

    @property
    def ok(self) -> bool:
        return not self.duplicate_ids and not self.empty_utterances

    def get_error_report(self) -> str:
        """Generate a readable report; lists every offending id."""
        total = self.validation_summary["total_samples"]
        balance = ", ".join(
            f"{label.value}={count}" for label, count in self.class_balance.items()
        )

        if self.ok:
            return (
                f"Validation successful: {total} samples in '{self.dataset_id}' "
                f"({balance})"
            )

        report_lines = [
            f"Validation failed for '{self.dataset_id}'",
            f"Total samples: {total}",
            f"Class balance: {balance}",
        ]
        if self.duplicate_ids:
            report_lines.append("")
            report_lines.append("Duplicate ids:")
            for i, sample_id in enumerate(self.duplicate_ids, 1):
                report_lines.append(f"{i}. {sample_id}")
        if self.empty_utterances:
            report_lines.append("")
            report_lines.append("Empty utterances:")
            for i, sample_id in enumerate(self.empty_utterances, 1):
                report_lines.append(f"{i}. {sample_id}")

        return "\n".join(report_lines)


def validate(dataset: Dataset) -> ValidationReport:
    """Report duplicate ids, empty utterances and class balance; never raises."""
    report = ValidationReport(dataset.id)
    report.validation_summary["total_samples"] = len(dataset.samples)

    id_counts = Counter(sample.id for sample in dataset.samples)
    for sample_id, count in id_counts.items():
        if count > 1:
            report.add_duplicate(sample_id)

    for sample in dataset.samples:
        report.class_balance[sample.gold] += 1
        if not sample.utterance.strip():
            report.add_empty_utterance(sample.id)

    return report
