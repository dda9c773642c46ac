import csv
import json

import numpy as np

from experiment_worker import run_tasks
from report_exporter import ExperimentReport, ReportExporter


def _report():
    report = ExperimentReport("demo", {"K": [1, 2]}, {"note": "x"})
    for K in (1, 2):
        for seed in range(3):
            report.add(f"K={K}", seed, {"auc": 60.0 + 10 * K + seed, "extra_metric": None},
                       params={"K": K}, extra={"curve": np.arange(3)})
    report.flags["best_K"] = 2
    return report


def test_summary_mean_std_and_seed_count():
    summary = _report().summary()
    assert summary["K=1"]["seeds"] == 3
    assert summary["K=2"]["auc"]["mean"] == 81.0
    assert np.isclose(summary["K=2"]["auc"]["std"], np.std([80, 81, 82]))
    assert "extra_metric" not in summary["K=1"]


def test_json_export_embeds_config_and_version(tmp_path):
    ReportExporter.export_to_json(_report(), tmp_path / "r.json", {"seeds": "0..2"})
    payload = json.loads((tmp_path / "r.json").read_text())
    assert payload["config"] == {"seeds": "0..2"}
    assert payload["version"].startswith("gdp-toolkit/")
    assert payload["report"]["records"][0]["extra"]["curve"] == [0, 1, 2]
    assert "system_info" in payload


def test_csv_has_one_row_per_cell_seed(tmp_path):
    ReportExporter.export_to_csv(_report(), tmp_path / "r.csv")
    with open(tmp_path / "r.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 6
    assert rows[0]["cell"] == "K=1" and rows[0]["auc"] == "70.0"


def test_text_export():
    text = ReportExporter.export_to_text(_report())
    assert "K=2  (seeds: 3)" in text
    assert "flag best_K: 2" in text


def test_run_tasks_parallel_matches_inline():
    tasks = [((i, "x"), (lambda i=i: i * i)) for i in range(6)]
    assert run_tasks(tasks, jobs=1) == run_tasks(tasks, jobs=3)


def test_run_tasks_reraises_first_failure_in_order():
    def boom(k):
        def fn():
            raise ValueError(f"task {k}")
        return fn

    tasks = [(0, lambda: 1), (1, boom(1)), (2, boom(2))]
    for jobs in (1, 2):
        try:
            run_tasks(tasks, jobs=jobs)
        except ValueError as exc:
            assert str(exc) == "task 1"
        else:
            raise AssertionError("expected failure")
