import itertools
import json
import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from canvascheck.adjudication import Verdict, VerdictStore
from canvascheck.dataset import BugLabel
from canvascheck.evaluation import (
    ConfusionCounts,
    EvaluationError,
    Outcome,
    PendingAdjudicationError,
    accuracy,
    aggregate,
    classify,
    pass_at_k,
    precision,
    recall,
)
from canvascheck.prompting import PromptStrategy
from canvascheck.vlm_client import (
    ExtractedAnswer,
    MockProvider,
    RunArchive,
    RunConfig,
    run_experiment,
)


def brute_force_pass_at_k(n: int, c: int, k: int) -> float:
    """Oracle: enumerate every k-subset of n responses, c of them correct."""
    correct = set(range(c))
    subsets = list(itertools.combinations(range(n), k))
    hits = sum(1 for subset in subsets if correct & set(subset))
    return hits / len(subsets)


class TestClassify:
    def test_negative_on_bugfree_is_tn(self):
        answer = ExtractedAnswer(False, "")
        assert classify(answer, BugLabel.BUG_FREE) is Outcome.TN

    def test_negative_on_buggy_is_fn(self):
        answer = ExtractedAnswer(False, "")
        assert classify(answer, BugLabel.LAYOUT) is Outcome.FN

    def test_positive_on_bugfree_is_fp_without_review(self):
        answer = ExtractedAnswer(True, "ghost bug")
        assert classify(answer, BugLabel.BUG_FREE) is Outcome.FP

    def test_positive_on_buggy_with_correct_verdict_is_tp(self):
        answer = ExtractedAnswer(True, "paddle missing")
        assert classify(answer, BugLabel.STATE, Verdict.CORRECT) is Outcome.TP

    def test_positive_on_buggy_with_incorrect_verdict_is_fp(self):
        answer = ExtractedAnswer(True, "wrong colors")
        assert classify(answer, BugLabel.STATE, Verdict.INCORRECT) is Outcome.FP

    def test_missing_required_verdict_raises_pending(self):
        answer = ExtractedAnswer(True, "something broke")
        with pytest.raises(PendingAdjudicationError):
            classify(answer, BugLabel.RENDERING)

    def test_total_and_exclusive_over_all_combinations(self):
        """Every (detect, label, verdict) triple maps to exactly one outcome."""
        verdicts = [None, Verdict.CORRECT, Verdict.INCORRECT]
        for detected, label, verdict in itertools.product(
            [False, True], list(BugLabel), verdicts
        ):
            answer = ExtractedAnswer(detected, "desc" if detected else "")
            needs_verdict = detected and label is not BugLabel.BUG_FREE
            if needs_verdict and verdict is None:
                with pytest.raises(PendingAdjudicationError):
                    classify(answer, label, verdict)
                continue
            outcome = classify(answer, label, verdict)
            assert isinstance(outcome, Outcome)
            if not detected:
                expected = Outcome.TN if label is BugLabel.BUG_FREE else Outcome.FN
            elif label is BugLabel.BUG_FREE:
                expected = Outcome.FP
            else:
                expected = Outcome.TP if verdict is Verdict.CORRECT else Outcome.FP
            assert outcome is expected


class TestConfusionMetrics:
    def test_all_correct_gives_accuracy_one(self):
        assert accuracy(ConfusionCounts(tp=1, tn=1)) == 1.0

    def test_all_wrong_gives_accuracy_zero(self):
        assert accuracy(ConfusionCounts(fp=1, fn=1)) == 0.0

    def test_hand_counted_three_of_five(self):
        assert accuracy(ConfusionCounts(tp=2, tn=1, fp=1, fn=1)) == 0.6

    def test_precision_examples(self):
        assert precision(ConfusionCounts(tp=3, fp=1)) == 0.75
        assert precision(ConfusionCounts()) is None
        assert precision(ConfusionCounts(fp=4)) == 0.0

    def test_recall_examples(self):
        assert recall(ConfusionCounts(tp=1, fn=3)) == 0.25
        assert recall(ConfusionCounts(tp=4)) == 1.0
        assert recall(ConfusionCounts()) is None

    def test_empty_slice_accuracy_undefined(self):
        assert accuracy(ConfusionCounts()) is None

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            ConfusionCounts(tp=-1)

    @given(
        tp=st.integers(0, 50), fp=st.integers(0, 50),
        tn=st.integers(0, 50), fn=st.integers(0, 50),
        scale=st.integers(1, 9),
    )
    def test_metrics_invariant_under_count_scaling(self, tp, fp, tn, fn, scale):
        base = ConfusionCounts(tp, fp, tn, fn)
        scaled = ConfusionCounts(tp * scale, fp * scale, tn * scale, fn * scale)
        for metric in (accuracy, precision, recall):
            left, right = metric(base), metric(scaled)
            if left is None:
                assert right is None
            else:
                assert left == pytest.approx(right, abs=1e-12)


class TestPassAtK:
    def test_paper_branch_zero_correct(self):
        assert pass_at_k(4, 0, 2) == 0.0

    def test_all_correct_is_one(self):
        assert pass_at_k(4, 4, 1) == 1.0

    def test_one_of_four_at_one(self):
        assert pass_at_k(4, 1, 1) == pytest.approx(0.25, abs=1e-12)

    def test_two_of_four_at_two(self):
        assert pass_at_k(4, 2, 2) == pytest.approx(5 / 6, abs=1e-12)

    def test_matches_brute_force_for_all_small_cases(self):
        for n in range(1, 9):
            for c in range(0, n + 1):
                for k in range(1, n + 1):
                    assert pass_at_k(n, c, k) == pytest.approx(
                        brute_force_pass_at_k(n, c, k), abs=1e-9
                    ), (n, c, k)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            pass_at_k(4, 5, 1)  # c > n
        with pytest.raises(ValueError):
            pass_at_k(4, 1, 5)  # k > n
        with pytest.raises(ValueError):
            pass_at_k(4, -1, 1)
        with pytest.raises(ValueError):
            pass_at_k(4, 1, 0)

    @settings(max_examples=200)
    @given(st.integers(1, 12).flatmap(
        lambda n: st.tuples(st.just(n), st.integers(0, n), st.integers(1, n))
    ))
    def test_nondecreasing_in_k_and_c(self, ncx):
        n, c, k = ncx
        value = pass_at_k(n, c, k)
        assert 0.0 <= value <= 1.0
        if k < n:
            assert pass_at_k(n, c, k + 1) >= value - 1e-12
        if c < n:
            assert pass_at_k(n, c + 1, k) >= value - 1e-12

    def test_full_k_with_any_correct_is_one(self):
        for n in range(1, 9):
            for c in range(1, n + 1):
                assert pass_at_k(n, c, n) == 1.0


def write_archive(directory, outcomes_by_screenshot, strategy="readme",
                  repetitions=4, run_id="test-run"):
    """Build a synthetic archive realizing the given per-rep detections.

    outcomes_by_screenshot maps screenshot_id -> list of per-repetition
    (detected, description) pairs.
    """
    archive = RunArchive(directory)
    cfg = RunConfig(
        repetitions=repetitions,
        k_values=tuple(k for k in (1, 2, 4) if k <= repetitions),
    )
    archive.initialize(run_id, PromptStrategy.from_cli_name(strategy), cfg)
    for sid, detections in outcomes_by_screenshot.items():
        app_id = sid.split("__")[0]
        for rep, (detected, description) in enumerate(detections):
            digest = f"digest-{sid}-{rep}"
            archive.append({
                "event": "analysis", "strategy": strategy, "app_id": app_id,
                "screenshot_id": sid, "repetition": rep, "bundle_id": "b",
                "raw_text": f"analysis {sid} {rep}", "model_id": "mock",
                "created_at": "t", "usage": None, "image_path": f"{sid}.png",
            })
            archive.append({
                "event": "answer", "strategy": strategy, "app_id": app_id,
                "screenshot_id": sid, "repetition": rep,
                "analysis_digest": digest, "detected": detected,
                "description": description, "normalized": False,
                "model_id": "mock", "created_at": "t",
                "image_path": f"{sid}.png",
            })
    return archive


def store_with_verdicts(path, run_id, verdicts):
    """verdicts: list of (sid, rep, Verdict)."""
    store = VerdictStore(path)
    from canvascheck.adjudication import AdjudicationRecord
    for sid, rep, verdict in verdicts:
        store.append(AdjudicationRecord(
            run_id=run_id, screenshot_id=sid, repetition_index=rep,
            verdict=verdict, analysis_digest=f"digest-{sid}-{rep}",
            reviewer="t", decided_at="t",
        ))
    return store


class TestAggregate:
    def test_degenerate_perfect_run(self, tmp_path):
        outcomes = {
            "app__bugfree": [(False, "")] * 4,
            "app__state": [(True, "d")] * 4,
            "app__rendering": [(True, "d")] * 4,
            "app__layout": [(True, "d")] * 4,
            "app__appearance": [(True, "d")] * 4,
        }
        archive = write_archive(tmp_path / "run", outcomes)
        verdicts = [
            (sid, rep, Verdict.CORRECT)
            for sid in outcomes if not sid.endswith("bugfree")
            for rep in range(4)
        ]
        store = store_with_verdicts(tmp_path / "v.ndjson", "test-run", verdicts)
        report = aggregate(archive, store)
        assert report.overall_accuracy == 1.0
        for k in (1, 2, 4):
            assert report.pass_at_k[k].mean == 1.0
            assert report.pass_at_k[k].std == 0.0
        assert report.per_app["app"] == [1.0] * 4

    def test_one_of_four_correct_everywhere(self, tmp_path):
        # first repetition correct, the rest wrong, on every screenshot
        outcomes = {
            "app__bugfree": [(False, ""), (True, "x"), (True, "x"), (True, "x")],
            "app__state": [(True, "d"), (False, ""), (False, ""), (False, "")],
            "app__rendering": [(True, "d"), (False, ""), (False, ""), (False, "")],
            "app__layout": [(True, "d"), (False, ""), (False, ""), (False, "")],
            "app__appearance": [(True, "d"), (False, ""), (False, ""), (False, "")],
        }
        archive = write_archive(tmp_path / "run", outcomes)
        verdicts = [
            (sid, 0, Verdict.CORRECT) for sid in outcomes if not sid.endswith("bugfree")
        ]
        store = store_with_verdicts(tmp_path / "v.ndjson", "test-run", verdicts)
        report = aggregate(archive, store)
        assert report.pass_at_k[1].mean == pytest.approx(0.25, abs=1e-12)
        assert report.pass_at_k[4].mean == 1.0
        assert report.pass_at_k[2].mean == pytest.approx(0.5, abs=1e-12)

    def test_per_app_slice_hand_count(self, tmp_path):
        # outcomes per rep 0: TN, TP, FP, FN, FN -> accuracy 2/5
        outcomes = {
            "app__bugfree": [(False, "")],
            "app__state": [(True, "good")],
            "app__rendering": [(True, "bad")],
            "app__layout": [(False, "")],
            "app__appearance": [(False, "")],
        }
        archive = write_archive(tmp_path / "run", outcomes, repetitions=1)
        store = store_with_verdicts(
            tmp_path / "v.ndjson", "test-run",
            [("app__state", 0, Verdict.CORRECT),
             ("app__rendering", 0, Verdict.INCORRECT)],
        )
        report = aggregate(archive, store)
        assert report.per_app["app"] == [pytest.approx(0.4)]
        assert report.overall_accuracy == pytest.approx(0.4)

    def test_pending_adjudications_block_with_item_list(self, tmp_path):
        outcomes = {"app__state": [(True, "needs review")]}
        archive = write_archive(tmp_path / "run", outcomes, repetitions=1)
        store = VerdictStore(tmp_path / "v.ndjson")
        with pytest.raises(PendingAdjudicationError) as err:
            aggregate(archive, store)
        assert err.value.items == [("app__state", 0)]

    def test_incomplete_archive_rejected(self, tmp_path):
        outcomes = {"app__bugfree": [(False, ""), (False, "")]}
        archive = write_archive(tmp_path / "run", outcomes, repetitions=2)
        # config says 4 reps but archive has 2
        meta = json.loads((tmp_path / "run" / "run.json").read_text())
        meta["config"]["repetitions"] = 4
        (tmp_path / "run" / "run.json").write_text(json.dumps(meta))
        store = VerdictStore(tmp_path / "v.ndjson")
        with pytest.raises(EvaluationError, match="missing"):
            aggregate(archive, store)

    def test_stale_digest_verdict_does_not_apply(self, tmp_path):
        outcomes = {"app__state": [(True, "desc")]}
        archive = write_archive(tmp_path / "run", outcomes, repetitions=1)
        store = store_with_verdicts(
            tmp_path / "v.ndjson", "test-run", [],
        )
        from canvascheck.adjudication import AdjudicationRecord
        store.append(AdjudicationRecord(
            run_id="test-run", screenshot_id="app__state", repetition_index=0,
            verdict=Verdict.CORRECT, analysis_digest="digest-from-older-output",
            reviewer="t", decided_at="t",
        ))
        with pytest.raises(PendingAdjudicationError):
            aggregate(archive, store)

    def test_aggregation_deterministic(self, tmp_path, fixture_dataset,
                                       mock_script_path, verdicts_import_path):
        from canvascheck.adjudication import import_verdicts
        cfg = RunConfig()
        provider = MockProvider.from_file(mock_script_path)
        archive_dir = tmp_path / "run"
        run_experiment(fixture_dataset, PromptStrategy.README, cfg, provider,
                       archive_dir, run_id="det")
        archive = RunArchive(archive_dir)
        store = VerdictStore(tmp_path / "v.ndjson")
        import_verdicts(archive, store, verdicts_import_path)
        first = aggregate(archive, store).to_json_dict()
        second = aggregate(archive, store).to_json_dict()
        assert first == second

    def test_pass_at_k_std_matches_population_formula(self, tmp_path):
        outcomes = {
            "app__bugfree": [(False, ""), (False, "")],
            "app__state": [(False, ""), (False, "")],
            "app__rendering": [(False, ""), (True, "d")],
            "app__layout": [(False, ""), (False, "")],
            "app__appearance": [(False, ""), (False, "")],
        }
        archive = write_archive(tmp_path / "run", outcomes, repetitions=2)
        store = store_with_verdicts(
            tmp_path / "v.ndjson", "test-run",
            [("app__rendering", 1, Verdict.CORRECT)],
        )
        report = aggregate(archive, store)
        values = sorted(report.pass_at_k_per_screenshot[1].values())
        assert report.pass_at_k[1].std == pytest.approx(
            statistics.pstdev(values), abs=1e-12
        )

    def test_bugfree_slice_reported_per_repetition(self, tmp_path):
        outcomes = {
            "app__bugfree": [(True, "ghost"), (False, "")],
            "app__state": [(False, ""), (False, "")],
            "app__rendering": [(False, ""), (False, "")],
            "app__layout": [(False, ""), (False, "")],
            "app__appearance": [(False, ""), (False, "")],
        }
        archive = write_archive(tmp_path / "run", outcomes, repetitions=2)
        store = VerdictStore(tmp_path / "v.ndjson")
        report = aggregate(archive, store)
        bugfree = report.per_bug_type[BugLabel.BUG_FREE.token]
        assert bugfree[0].accuracy == 0.0
        assert bugfree[1].accuracy == 1.0
        assert bugfree[0].fp == 1 and bugfree[1].tn == 1
