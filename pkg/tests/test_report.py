import pytest

from canvascheck.report import (
    MetricsReport,
    PassAtKSummary,
    ReportError,
    SliceMetrics,
    bug_free_accuracies,
    emit_csv,
    emit_pass_at_k_table,
    render_csv,
)


def make_slice(tp=0, fp=0, tn=0, fn=0, accuracy=None, precision=None, recall=None):
    return SliceMetrics(tp, fp, tn, fn, accuracy, precision, recall)


def make_report(strategy="readme", pass_means=None, repetitions=4, apps=("a", "b")):
    pass_means = pass_means or {1: (1.0, 0.0), 2: (1.0, 0.0), 4: (1.0, 0.0)}
    per_bug_type = {
        label: [make_slice(tp=2, accuracy=1.0, precision=1.0, recall=1.0)
                for _ in range(repetitions)]
        for label in ("bugfree", "state", "rendering", "layout", "appearance")
    }
    return MetricsReport(
        strategy=strategy,
        per_bug_type=per_bug_type,
        per_app={app: [1.0] * repetitions for app in apps},
        overall_accuracy=1.0,
        pass_at_k={k: PassAtKSummary(m, s) for k, (m, s) in pass_means.items()},
        pass_at_k_per_screenshot={k: {"a__state": m} for k, (m, _) in pass_means.items()},
        metadata={"run_id": "r"},
    )


def table_rows(table: str) -> list[list[str]]:
    return [line.split() for line in table.strip().splitlines()]


class TestPassAtKTable:
    def test_perfect_run_row_is_all_hundreds_and_zeros(self):
        table = emit_pass_at_k_table([make_report()])
        row = table_rows(table)[1]
        assert row[0] == "readme"
        assert row[1:] == ["100", "0", "100", "0", "100", "0"]

    def test_quarter_mean_displays_as_25(self):
        report = make_report(pass_means={1: (0.25, 0.0), 2: (0.5, 0.0), 4: (1.0, 0.0)})
        row = table_rows(emit_pass_at_k_table([report]))[1]
        assert row[1] == "25"
        assert row[3] == "50"
        assert row[5] == "100"

    def test_one_row_per_strategy_in_input_order(self):
        reports = [make_report(strategy=name) for name in
                   ("no-context", "readme", "readme-plus-bug-descriptions",
                    "all-context-except-assets", "all-context")]
        rows = table_rows(emit_pass_at_k_table(reports))
        assert len(rows) == 6  # header + 5 strategies
        assert [r[0] for r in rows[1:]] == [r.strategy for r in reports]
        # three k columns, Avg. and Std. each
        assert all(len(r) == 7 for r in rows[1:])

    def test_mismatched_k_values_rejected(self):
        good = make_report()
        bad = make_report(strategy="other", pass_means={1: (1.0, 0.0)})
        with pytest.raises(ReportError, match="k values"):
            emit_pass_at_k_table([good, bad])

    def test_empty_report_list_rejected(self):
        with pytest.raises(ReportError, match="no reports"):
            emit_pass_at_k_table([])


class TestCsvEmission:
    def test_per_bug_type_row_count_and_order(self):
        csv_text = render_csv(make_report(), "per_bug_type")
        lines = csv_text.strip().splitlines()
        assert lines[0] == (
            "strategy,bug_type,repetition,tp,fp,tn,fn,accuracy,precision,recall"
        )
        rows = lines[1:]
        assert len(rows) == 16  # four injected types x four repetitions
        types_in_order = [row.split(",")[1] for row in rows]
        assert types_in_order == (
            ["state"] * 4 + ["rendering"] * 4 + ["layout"] * 4 + ["appearance"] * 4
        )

    def test_per_app_rows(self):
        csv_text = render_csv(make_report(apps=("alpha", "beta")), "per_app")
        rows = csv_text.strip().splitlines()[1:]
        assert len(rows) == 8  # 2 apps x 4 repetitions
        assert rows[0].startswith("readme,alpha,0,")

    def test_overall_is_single_row(self):
        csv_text = render_csv(make_report(), "overall")
        rows = csv_text.strip().splitlines()
        assert len(rows) == 2
        assert rows[1] == "readme,1.0"

    def test_undefined_metric_rendered_as_na(self):
        report = make_report()
        report.per_bug_type["state"][0] = make_slice(fn=2, accuracy=0.0, recall=0.0)
        csv_text = render_csv(report, "per_bug_type")
        state_row_0 = csv_text.strip().splitlines()[1]
        assert state_row_0.endswith("0.0,n/a,0.0")

    def test_unknown_kind_rejected(self):
        with pytest.raises(ReportError, match="unknown CSV kind"):
            render_csv(make_report(), "per_pixel")

    def test_emission_is_deterministic(self, tmp_path):
        report = make_report()
        first = emit_csv(report, "per_bug_type", tmp_path / "a.csv").read_bytes()
        second = emit_csv(report, "per_bug_type", tmp_path / "b.csv").read_bytes()
        assert first == second


class TestJsonRoundTrip:
    def test_report_round_trips_losslessly(self, tmp_path):
        report = make_report(pass_means={1: (0.425, 0.37), 2: (17 / 30, 0.4), 4: (0.7, 0.45)})
        report.per_bug_type["layout"][2] = make_slice(fn=2, accuracy=0.0, recall=0.0)
        path = tmp_path / "report.json"
        report.save(path)
        loaded = MetricsReport.load(path)
        assert loaded.strategy == report.strategy
        assert loaded.per_bug_type == report.per_bug_type
        assert loaded.per_app == report.per_app
        assert loaded.pass_at_k == report.pass_at_k
        assert loaded.pass_at_k_per_screenshot == report.pass_at_k_per_screenshot
        assert loaded.overall_accuracy == report.overall_accuracy

    def test_undefined_values_survive_as_null(self, tmp_path):
        report = make_report()
        report.overall_accuracy = None
        path = tmp_path / "report.json"
        report.save(path)
        assert MetricsReport.load(path).overall_accuracy is None

    def test_saved_bytes_deterministic(self, tmp_path):
        report = make_report()
        report.save(tmp_path / "a.json")
        report.save(tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


class TestBugFreeAccuracies:
    def test_extracts_per_repetition_values(self):
        report = make_report()
        report.per_bug_type["bugfree"] = [
            make_slice(tn=2, accuracy=1.0),
            make_slice(tn=1, fp=1, accuracy=0.5),
            make_slice(tn=2, accuracy=1.0),
            make_slice(tn=2, accuracy=1.0),
        ]
        assert bug_free_accuracies(report) == [1.0, 0.5, 1.0, 1.0]
