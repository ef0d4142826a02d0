"""Result tables in machine- and human-readable form.

A MetricsReport carries full-precision values; rounding to integer
percentages happens only in the terminal table. Undefined metric values
(zero denominators) are kept as None in memory, null in JSON, and
rendered as ``n/a`` in CSV.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import INJECTED_LABELS, BugLabel


class ReportError(Exception):
    """Reports cannot be combined or emitted as requested."""


CSV_KINDS = ("per_bug_type", "per_app", "overall")


@dataclass(frozen=True)
class SliceMetrics:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float | None
    precision: float | None
    recall: float | None

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SliceMetrics":
        return cls(**d)


@dataclass(frozen=True)
class PassAtKSummary:
    mean: float
    std: float


@dataclass
class MetricsReport:
    strategy: str
    per_bug_type: dict[str, list[SliceMetrics]]
    per_app: dict[str, list[float | None]]
    overall_accuracy: float | None
    pass_at_k: dict[int, PassAtKSummary]
    pass_at_k_per_screenshot: dict[int, dict[str, float]]
    metadata: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "per_bug_type": {
                label: [m.to_dict() for m in values]
                for label, values in self.per_bug_type.items()
            },
            "per_app": self.per_app,
            "overall_accuracy": self.overall_accuracy,
            "pass_at_k": {
                str(k): {"mean": s.mean, "std": s.std}
                for k, s in self.pass_at_k.items()
            },
            "pass_at_k_per_screenshot": {
                str(k): values
                for k, values in self.pass_at_k_per_screenshot.items()
            },
            "metadata": self.metadata,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            strategy=d["strategy"],
            per_bug_type={
                label: [SliceMetrics.from_dict(m) for m in values]
                for label, values in d["per_bug_type"].items()
            },
            per_app=d["per_app"],
            overall_accuracy=d["overall_accuracy"],
            pass_at_k={
                int(k): PassAtKSummary(v["mean"], v["std"])
                for k, v in d["pass_at_k"].items()
            },
            pass_at_k_per_screenshot={
                int(k): values
                for k, values in d.get("pass_at_k_per_screenshot", {}).items()
            },
            metadata=d.get("metadata", {}),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "MetricsReport":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _percent(value: float) -> int:
    return round(value * 100)


def emit_pass_at_k_table(reports: list[MetricsReport]) -> str:
    """One row per strategy; Avg./Std. columns per k, integer percentages."""
    if not reports:
        raise ReportError("no reports to tabulate")
    k_values = sorted(reports[0].pass_at_k)
    for report in reports[1:]:
        if sorted(report.pass_at_k) != k_values:
            raise ReportError(
                f"report {report.strategy!r} has k values "
                f"{sorted(report.pass_at_k)}, expected {k_values}"
            )

    name_width = max(len("Prompting strategy"), *(len(r.strategy) for r in reports))
    header_cells = [f"{'Prompting strategy':<{name_width}}"]
    for k in k_values:
        header_cells.append(f"{f'Pass@{k} Avg.':>12}")
        header_cells.append(f"{'Std.':>5}")
    lines = ["  ".join(header_cells)]
    for report in reports:
        cells = [f"{report.strategy:<{name_width}}"]
        for k in k_values:
            summary = report.pass_at_k[k]
            cells.append(f"{_percent(summary.mean):>12}")
            cells.append(f"{_percent(summary.std):>5}")
        lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"


def _cell(value: float | None) -> str:
    return "n/a" if value is None else repr(value)


def render_csv(report: MetricsReport, kind: str) -> str:
    """Render one CSV document; stable column order, one row per slice."""
    if kind not in CSV_KINDS:
        raise ReportError(f"unknown CSV kind {kind!r} (known: {CSV_KINDS})")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")

    if kind == "per_bug_type":
        writer.writerow(
            ["strategy", "bug_type", "repetition", "tp", "fp", "tn", "fn",
             "accuracy", "precision", "recall"]
        )
        for label in INJECTED_LABELS:
            for rep, m in enumerate(report.per_bug_type.get(label.token, [])):
                writer.writerow(
                    [report.strategy, label.token, rep, m.tp, m.fp, m.tn, m.fn,
                     _cell(m.accuracy), _cell(m.precision), _cell(m.recall)]
                )
    elif kind == "per_app":
        writer.writerow(["strategy", "app_id", "repetition", "accuracy"])
        for app_id in sorted(report.per_app):
            for rep, accuracy in enumerate(report.per_app[app_id]):
                writer.writerow([report.strategy, app_id, rep, _cell(accuracy)])
    else:
        writer.writerow(["strategy", "overall_accuracy"])
        writer.writerow([report.strategy, _cell(report.overall_accuracy)])

    return buffer.getvalue()


def emit_csv(report: MetricsReport, kind: str, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(render_csv(report, kind), encoding="utf-8")
    return path


def bug_free_accuracies(report: MetricsReport) -> list[float | None]:
    """Per-repetition accuracy over the bug-free screenshots."""
    return [m.accuracy for m in report.per_bug_type.get(BugLabel.BUG_FREE.token, [])]
