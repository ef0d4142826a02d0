"""Outcome classification and the metric suite.

Classification rules, with ground truth G and prediction P:

  P = no bug,  G = bug-free  ->  TN
  P = no bug,  G = buggy     ->  FN
  P = bug,     G = bug-free  ->  FP  (never reviewed)
  P = bug,     G = buggy     ->  TP when the human verdict says the
                                 description matches the injected bug,
                                 FP otherwise

Metrics:

  accuracy  = (TN + TP) / (TN + TP + FP + FN)
  precision = TP / (TP + FP)
  recall    = TP / (TP + FN)

pass@k over n generated responses with c correct follows the piecewise
closed form: 1 when c > 0 and n - c < k; 1 - prod_{i=n-c+1..n}(1 - k/i)
when c > 0 and n - c >= k; 0 when c = 0.

Zero-denominator metrics are returned as None and excluded from means
rather than coerced to 0.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from enum import Enum

from .adjudication import Verdict, VerdictStore
from .dataset import BugLabel, label_from_filename
from .report import MetricsReport, PassAtKSummary, SliceMetrics
from .vlm_client import ExtractedAnswer, RunArchive


class EvaluationError(Exception):
    """The archive cannot be aggregated as requested."""


class PendingAdjudicationError(EvaluationError):
    """Positive predictions on buggy screenshots still lack verdicts."""

    def __init__(self, items: list[tuple[str, int]]):
        self.items = items
        listing = ", ".join(f"{sid} rep {rep}" for sid, rep in items)
        super().__init__(f"{len(items)} pending adjudication(s): {listing}")


class Outcome(Enum):
    TP = "tp"
    FP = "fp"
    TN = "tn"
    FN = "fn"

    @property
    def is_correct(self) -> bool:
        return self in (Outcome.TP, Outcome.TN)


def classify(
    answer: ExtractedAnswer, label: BugLabel, verdict: Verdict | None = None
) -> Outcome:
    """Map one (prediction, ground truth, verdict) triple to its outcome.

    A verdict is required exactly when a bug was predicted on a screenshot
    that really contains one; a missing verdict raises rather than
    defaulting silently. Superfluous verdicts are ignored.
    """
    detected = answer.bool_did_detect_visual_bug
    if not detected:
        return Outcome.TN if label is BugLabel.BUG_FREE else Outcome.FN
    if label is BugLabel.BUG_FREE:
        return Outcome.FP
    if verdict is None:
        raise PendingAdjudicationError([("<unadjudicated>", -1)])
    return Outcome.TP if verdict is Verdict.CORRECT else Outcome.FP


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def with_outcome(self, outcome: Outcome) -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + (outcome is Outcome.TP),
            fp=self.fp + (outcome is Outcome.FP),
            tn=self.tn + (outcome is Outcome.TN),
            fn=self.fn + (outcome is Outcome.FN),
        )

    @classmethod
    def from_outcomes(cls, outcomes) -> "ConfusionCounts":
        counts = cls()
        for outcome in outcomes:
            counts = counts.with_outcome(outcome)
        return counts


def accuracy(counts: ConfusionCounts) -> float | None:
    if counts.total == 0:
        return None
    return (counts.tn + counts.tp) / counts.total


def precision(counts: ConfusionCounts) -> float | None:
    denominator = counts.tp + counts.fp
    if denominator == 0:
        return None
    return counts.tp / denominator


def recall(counts: ConfusionCounts) -> float | None:
    denominator = counts.tp + counts.fn
    if denominator == 0:
        return None
    return counts.tp / denominator


def pass_at_k(n: int, c: int, k: int) -> float:
    """Probability that at least one of k responses drawn from n is correct."""
    if n < 1:
        raise ValueError("n must be positive")
    if not 0 <= c <= n:
        raise ValueError(f"c={c} out of range [0, {n}]")
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range [1, {n}]")
    if c == 0:
        return 0.0
    if n - c < k:
        return 1.0
    product = 1.0
    for i in range(n - c + 1, n + 1):
        product *= 1.0 - k / i
    return 1.0 - product


def _slice_metrics(counts: ConfusionCounts) -> SliceMetrics:
    return SliceMetrics(
        tp=counts.tp,
        fp=counts.fp,
        tn=counts.tn,
        fn=counts.fn,
        accuracy=accuracy(counts),
        precision=precision(counts),
        recall=recall(counts),
    )


def aggregate(
    archive: RunArchive,
    store: VerdictStore,
    k_values: tuple[int, ...] | None = None,
) -> MetricsReport:
    """Classify every archived answer and compute the full metric suite.

    Produces, for the run's strategy: per-bug-type confusion counts and
    metrics pooled over apps (one entry per repetition, bug-free slice
    included), per-application accuracy over that app's screenshots per
    repetition, overall accuracy pooled over everything, and per-screenshot
    pass@k with mean and population standard deviation over screenshots.
    """
    meta = archive.metadata()
    run_id = meta["run_id"]
    strategy = meta["strategy"]
    repetitions = meta["config"]["repetitions"]
    if k_values is None:
        k_values = tuple(meta["config"]["k_values"])
    for k in k_values:
        if not 1 <= k <= repetitions:
            raise EvaluationError(f"k={k} out of range for {repetitions} repetitions")

    answers = archive.answers()
    screenshot_ids = sorted({sid for (_, sid, _) in answers})
    if not screenshot_ids:
        raise EvaluationError("archive contains no answer records")

    incomplete = [
        (sid, rep)
        for sid in screenshot_ids
        for rep in range(repetitions)
        if (strategy, sid, rep) not in answers
    ]
    if incomplete:
        raise EvaluationError(
            f"archive is missing {len(incomplete)} screenshot-repetition "
            f"pair(s), e.g. {incomplete[0]}; re-run with --resume"
        )

    adjudicated = store.index()
    pending: list[tuple[str, int]] = []
    outcomes: dict[tuple[str, int], Outcome] = {}
    apps: dict[str, list[str]] = {}
    for sid in screenshot_ids:
        label = label_from_filename(sid)
        for rep in range(repetitions):
            record = answers[(strategy, sid, rep)]
            apps.setdefault(record["app_id"], [])
            if sid not in apps[record["app_id"]]:
                apps[record["app_id"]].append(sid)
            answer = ExtractedAnswer(record["detected"], record["description"])
            verdict_record = adjudicated.get(
                (run_id, sid, rep, record["analysis_digest"])
            )
            verdict = verdict_record.verdict if verdict_record else None
            try:
                outcomes[(sid, rep)] = classify(answer, label, verdict)
            except PendingAdjudicationError:
                pending.append((sid, rep))
    if pending:
        raise PendingAdjudicationError(pending)

    per_bug_type: dict[str, list[SliceMetrics]] = {}
    for label in BugLabel:
        slice_ids = [sid for sid in screenshot_ids if label_from_filename(sid) is label]
        if not slice_ids:
            continue
        per_bug_type[label.token] = [
            _slice_metrics(
                ConfusionCounts.from_outcomes(
                    outcomes[(sid, rep)] for sid in slice_ids
                )
            )
            for rep in range(repetitions)
        ]

    per_app: dict[str, list[float | None]] = {}
    for app_id in sorted(apps):
        per_app[app_id] = [
            accuracy(
                ConfusionCounts.from_outcomes(
                    outcomes[(sid, rep)] for sid in apps[app_id]
                )
            )
            for rep in range(repetitions)
        ]

    overall = accuracy(ConfusionCounts.from_outcomes(outcomes.values()))

    per_screenshot: dict[int, dict[str, float]] = {k: {} for k in k_values}
    correct_counts = {
        sid: sum(
            outcomes[(sid, rep)].is_correct for rep in range(repetitions)
        )
        for sid in screenshot_ids
    }
    for k in k_values:
        for sid in screenshot_ids:
            per_screenshot[k][sid] = pass_at_k(repetitions, correct_counts[sid], k)

    summaries = {}
    for k in k_values:
        values = [per_screenshot[k][sid] for sid in screenshot_ids]
        summaries[k] = PassAtKSummary(
            mean=statistics.fmean(values),
            std=statistics.pstdev(values),
        )

    metadata = {
        "run_id": run_id,
        "repetitions": repetitions,
        "k_values": list(k_values),
        "screenshots": len(screenshot_ids),
        "config": meta["config"],
        "pass_at_k_std_estimator": "population",
        "per_app_accuracy_basis": (
            "computed over each application's own screenshots per repetition; "
            "the alternative whole-corpus reading is not used"
        ),
    }
    return MetricsReport(
        strategy=strategy,
        per_bug_type=per_bug_type,
        per_app=per_app,
        overall_accuracy=overall,
        pass_at_k=summaries,
        pass_at_k_per_screenshot=per_screenshot,
        metadata=metadata,
    )
