"""
Accuracy and macro-F1 over binary sarcasm verdicts.

Counting and ratios stay in exact integer / Fraction arithmetic; values are
converted to float only when a MetricsSummary is built.
"""

from fractions import Fraction
from typing import Iterable, Tuple

from models.domain import ConfusionCounts, Label, MetricsSummary, UnparseablePolicy, Verdict
from pipeline.errors import EmptyRunError


def confusion_counts(
    records: Iterable[Tuple[Label, Verdict]],
    policy: UnparseablePolicy = UnparseablePolicy.COUNT_AS_WRONG,
) -> ConfusionCounts:
    tp = fp = fn = tn = unparseable = 0
    seen = 0

    for gold, verdict in records:
        seen += 1
        if not verdict.is_decided:
            unparseable += 1
            if policy is UnparseablePolicy.COUNT_AS_WRONG:
                if gold is Label.SARCASTIC:
                    fn += 1
                else:
                    fp += 1
            continue

        predicted = verdict.label
        if gold is Label.SARCASTIC:
            if predicted is Label.SARCASTIC:
                tp += 1
            else:
                fn += 1
        else:
            if predicted is Label.SARCASTIC:
                fp += 1
            else:
                tn += 1

    if seen == 0:
        raise EmptyRunError("Cannot compute confusion counts for an empty record list")

    return ConfusionCounts(
        tp=tp, fp=fp, fn=fn, tn=tn, unparseable=unparseable, policy=policy
    )


def _require_scored(counts: ConfusionCounts) -> int:
    total = counts.scored
    if total == 0:
        raise EmptyRunError("No scored records (tp+fp+fn+tn == 0)")
    return total


def accuracy_fraction(counts: ConfusionCounts) -> Fraction:
    total = _require_scored(counts)
    return Fraction(counts.tp + counts.tn, total)


def class_f1_fraction(tp: int, fp: int, fn: int) -> Fraction:
    denominator = 2 * tp + fp + fn
    if denominator == 0:
        return Fraction(0)
    return Fraction(2 * tp, denominator)


def per_class_f1_fractions(counts: ConfusionCounts) -> dict:
    _require_scored(counts)
    return {
        Label.SARCASTIC: class_f1_fraction(counts.tp, counts.fp, counts.fn),
        # NotSarcastic as positive: TP=tn, FP=fn, FN=fp
        Label.NOT_SARCASTIC: class_f1_fraction(counts.tn, counts.fn, counts.fp),
    }


def macro_f1_fraction(counts: ConfusionCounts) -> Fraction:
    per_class = per_class_f1_fractions(counts)
    return sum(per_class.values(), Fraction(0)) / len(per_class)


def accuracy(counts: ConfusionCounts) -> float:
    return float(accuracy_fraction(counts))


def macro_f1(counts: ConfusionCounts) -> float:
    return float(macro_f1_fraction(counts))


def summarize_counts(counts: ConfusionCounts) -> MetricsSummary:
    per_class = per_class_f1_fractions(counts)
    return MetricsSummary(
        accuracy=float(accuracy_fraction(counts)),
        macro_f1=float(macro_f1_fraction(counts)),
        per_class_f1={label: float(value) for label, value in per_class.items()},
        counts=counts,
        n=counts.scored,
    )
