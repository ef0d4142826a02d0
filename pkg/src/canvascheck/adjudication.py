"""Human review of positive predictions on bug-injected screenshots.

Every prediction that a bug is present on a screenshot whose ground truth
is not bug-free needs a Correct/Incorrect verdict before metrics can be
computed. Positives on bug-free screenshots are false positives by
definition and are never queued.

Verdicts are stored append-only, one JSON record per line, keyed to the
analysis text digest so a verdict can never silently apply to different
model output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable

from .dataset import BugLabel, label_from_filename
from .vlm_client import RunArchive


class AdjudicationError(Exception):
    """The verdict store or import file refused the operation."""


class DuplicateVerdictError(AdjudicationError):
    """A verdict already exists for this item; the original is preserved."""


class Verdict(Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class AdjudicationRecord:
    run_id: str
    screenshot_id: str
    repetition_index: int
    verdict: Verdict
    analysis_digest: str
    reviewer: str
    decided_at: str
    note: str | None = None

    def to_dict(self) -> dict:
        record = {
            "run_id": self.run_id,
            "screenshot_id": self.screenshot_id,
            "repetition_index": self.repetition_index,
            "verdict": self.verdict.value,
            "analysis_digest": self.analysis_digest,
            "reviewer": self.reviewer,
            "decided_at": self.decided_at,
        }
        if self.note is not None:
            record["note"] = self.note
        return record

    @classmethod
    def from_dict(cls, d: dict) -> "AdjudicationRecord":
        return cls(
            run_id=d["run_id"],
            screenshot_id=d["screenshot_id"],
            repetition_index=d["repetition_index"],
            verdict=Verdict(d["verdict"]),
            analysis_digest=d["analysis_digest"],
            reviewer=d["reviewer"],
            decided_at=d["decided_at"],
            note=d.get("note"),
        )


@dataclass(frozen=True)
class PendingItem:
    run_id: str
    screenshot_id: str
    repetition_index: int
    label: BugLabel
    description: str
    analysis_digest: str
    image_path: str


class VerdictStore:
    """Append-only newline-delimited JSON store of adjudication records."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def load(self) -> list[AdjudicationRecord]:
        if not self.path.is_file():
            return []
        records = []
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(AdjudicationRecord.from_dict(json.loads(line)))
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise AdjudicationError(
                        f"{self.path}:{lineno}: bad verdict record: {exc}"
                    ) from exc
        return records

    def index(self) -> dict[tuple[str, str, int, str], AdjudicationRecord]:
        """Records keyed by (run_id, screenshot_id, repetition, digest)."""
        return {
            (r.run_id, r.screenshot_id, r.repetition_index, r.analysis_digest): r
            for r in self.load()
        }

    def lookup(
        self, run_id: str, screenshot_id: str, repetition_index: int, digest: str
    ) -> AdjudicationRecord | None:
        return self.index().get((run_id, screenshot_id, repetition_index, digest))

    def append(self, record: AdjudicationRecord) -> None:
        for existing in self.load():
            if (
                existing.run_id == record.run_id
                and existing.screenshot_id == record.screenshot_id
                and existing.repetition_index == record.repetition_index
            ):
                raise DuplicateVerdictError(
                    f"verdict already recorded for {record.screenshot_id} "
                    f"repetition {record.repetition_index}"
                )
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")


def pending_queue(archive: RunArchive, store: VerdictStore) -> list[PendingItem]:
    """Positive predictions on buggy screenshots that still lack a verdict.

    Ordered by (repetition, screenshot id) for a stable review sequence.
    """
    run_id = archive.metadata()["run_id"]
    adjudicated = store.index()
    pending = []
    for (strategy, screenshot_id, rep), record in sorted(
        archive.answers().items(), key=lambda kv: (kv[0][2], kv[0][1])
    ):
        if not record["detected"]:
            continue
        label = label_from_filename(screenshot_id)
        if label is BugLabel.BUG_FREE:
            continue  # auto-classified FP, never reviewed
        digest = record["analysis_digest"]
        if (run_id, screenshot_id, rep, digest) not in adjudicated:
            pending.append(
                PendingItem(
                    run_id=run_id,
                    screenshot_id=screenshot_id,
                    repetition_index=rep,
                    label=label,
                    description=record["description"],
                    analysis_digest=digest,
                    image_path=record.get("image_path", ""),
                )
            )
    return pending


def record_verdict(
    store: VerdictStore,
    item: PendingItem,
    verdict: Verdict,
    note: str | None = None,
    reviewer: str = "reviewer",
    clock: Callable[[], str] = _utc_now,
) -> AdjudicationRecord:
    record = AdjudicationRecord(
        run_id=item.run_id,
        screenshot_id=item.screenshot_id,
        repetition_index=item.repetition_index,
        verdict=verdict,
        analysis_digest=item.analysis_digest,
        reviewer=reviewer,
        decided_at=clock(),
        note=note,
    )
    store.append(record)
    return record


def import_verdicts(
    archive: RunArchive,
    store: VerdictStore,
    import_path: str | Path,
    reviewer: str = "import",
    clock: Callable[[], str] = _utc_now,
) -> int:
    """Apply a pre-filled verdict file against the pending queue.

    Each line is a JSON object {screenshot_id, repetition_index, verdict,
    note?}. Lines matching an already-stored verdict are skipped; lines
    matching nothing are an error.
    """
    pending = {
        (item.screenshot_id, item.repetition_index): item
        for item in pending_queue(archive, store)
    }
    meta = archive.metadata()
    run_id = meta["run_id"]
    strategy = meta["strategy"]
    answers = archive.answers()
    applied = 0
    with Path(import_path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
                key = (entry["screenshot_id"], entry["repetition_index"])
                verdict = Verdict(entry["verdict"])
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise AdjudicationError(
                    f"{import_path}:{lineno}: bad import line: {exc}"
                ) from exc
            if key in pending:
                record_verdict(
                    store,
                    pending.pop(key),
                    verdict,
                    note=entry.get("note"),
                    reviewer=reviewer,
                    clock=clock,
                )
                applied += 1
                continue
            answer = answers.get((strategy, key[0], key[1]))
            known = answer is not None and store.lookup(
                run_id, key[0], key[1], answer["analysis_digest"]
            )
            if known:
                continue  # idempotent re-import
            raise AdjudicationError(
                f"{import_path}:{lineno}: no pending item for "
                f"{key[0]} repetition {key[1]}"
            )
    return applied


def review_loop(
    archive: RunArchive,
    store: VerdictStore,
    reviewer: str = "reviewer",
    input_fn: Callable[[str], str] | None = None,
    print_fn: Callable[[str], None] = print,
) -> tuple[int, int]:
    """Terminal review flow: show each pending item, accept c/i/s.

    Prints the image path without opening anything. Returns the number of
    verdicts recorded and the number of items skipped.
    """
    if input_fn is None:
        input_fn = input
    queue = pending_queue(archive, store)
    recorded = 0
    skipped = 0
    for index, item in enumerate(queue, 1):
        print_fn(f"[{index}/{len(queue)}] {item.screenshot_id} rep {item.repetition_index}")
        print_fn(f"  image: {item.image_path}")
        print_fn(f"  ground truth: {item.label.token}")
        print_fn(f"  model description: {item.description}")
        while True:
            choice = input_fn("  verdict [c]orrect / [i]ncorrect / [s]kip: ").strip().lower()
            if choice in ("c", "i", "s"):
                break
            print_fn("  please answer c, i, or s")
        if choice == "s":
            skipped += 1
            continue
        verdict = Verdict.CORRECT if choice == "c" else Verdict.INCORRECT
        note = input_fn("  note (optional): ").strip() or None
        record_verdict(store, item, verdict, note=note, reviewer=reviewer)
        recorded += 1
    return recorded, skipped
