import os

import pytest

from bench.experiments import (ExperimentError, ExperimentSpec, SimSettings, artifact_name, characterize,
                               check_characterization, check_comparison, compare, default_characterize_workload,
                               default_compare_workload, default_strategies, strategy_label, warm_start)
from bench.host import run_host_strategy
from bench.report import comparison_frame, format_comparison, format_phase_summary, summarize_phases
from engine.stats import EngineStats, JobRecord
from flow.graph import load_flow, serialize_flow, validate
from main import ACCEPTANCE_PATH, main
from sim.workload import WorkloadSpec
from tests.builders import OCR_FLOW_PATH, graph, split_flow
from utils.config import ConfigError, load_acceptance, load_config

THRESHOLDS = load_acceptance(ACCEPTANCE_PATH)


@pytest.fixture(scope="module")
def characterized(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("characterize"))
    spec = ExperimentSpec("characterize", "sim", "always-local", default_characterize_workload(), out)
    return out, characterize(spec)


@pytest.fixture(scope="module")
def compared(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("compare"))
    return out, compare(default_strategies(), default_compare_workload(), out, warm_start(SimSettings()))


def test_characterization_meets_the_acceptance_thresholds(characterized):
    _, summary = characterized
    assert check_characterization(summary, THRESHOLDS["characterize"]) == []


def test_characterization_artifacts(characterized):
    out, summary = characterized
    assert sorted(os.listdir(out)) == ["jobs.csv", "summary.txt", "timeseries.csv"]
    with open(os.path.join(out, "jobs.csv"), encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    assert lines[0] == "job_id,location,duration_s,success,started_at,finished_at"
    assert len(lines) == 81
    with open(os.path.join(out, "summary.txt"), encoding="utf-8") as handle:
        assert handle.read() == format_phase_summary(summary)


def test_comparison_meets_the_acceptance_thresholds(compared):
    _, report = compared
    assert check_comparison(report, THRESHOLDS["compare"]) == []


def test_comparison_artifacts(compared):
    out, report = compared
    assert [run.label for run in report.runs] == ["jobs:4", "cpu:0.75", "mem:0.75", "temp:75"]
    assert os.path.exists(os.path.join(out, "cpu_0.75-jobs.csv"))
    assert os.path.exists(os.path.join(out, "temp_75-timeseries.csv"))
    assert list(report.table["strategy"]) == ["jobs:4", "cpu:0.75", "mem:0.75", "temp:75"]
    assert (report.table["jobs_total"] == 120).all()


def test_reruns_are_byte_identical(compared, tmp_path):
    out, _ = compared
    compare(default_strategies(), default_compare_workload(), str(tmp_path), warm_start(SimSettings()))
    for name in ("report.csv", "report.txt", "jobs_4-jobs.csv", "temp_75-timeseries.csv"):
        with open(os.path.join(out, name), "rb") as first, open(tmp_path / name, "rb") as second:
            assert first.read() == second.read(), name


def test_check_comparison_reports_a_missing_strategy(tmp_path):
    report = compare(["jobs:4"], default_compare_workload(total_jobs=10), str(tmp_path))
    assert check_comparison(report, THRESHOLDS["compare"]) == [
        "strategy cpu:0.75 was not run", "strategy mem:0.75 was not run", "strategy temp:75 was not run"]


def test_check_characterization_flags_a_missing_onset():
    summary = summarize_phases([JobRecord(1, "local", 24.0, True, 0.0, 24.0)], None)
    failures = check_characterization(summary, THRESHOLDS["characterize"])
    assert any("onset" in f for f in failures)
    assert any("post-throttle" in f for f in failures)


def test_zero_jobs_give_header_only_csv(tmp_path):
    report = compare(["jobs:4"], default_compare_workload(total_jobs=0), str(tmp_path))
    assert (tmp_path / "jobs_4-jobs.csv").read_text() == \
        "job_id,location,duration_s,success,started_at,finished_at\n"
    assert report.runs[0].stats.jobs_total == 0


def test_always_remote_has_no_local_jobs(tmp_path):
    compare(["always-remote"], default_compare_workload(total_jobs=6), str(tmp_path))
    text = (tmp_path / "report.txt").read_text()
    assert "no local jobs" in text


def test_compare_runs_the_given_flow(tmp_path):
    path = tmp_path / "local-only.json"
    flow = graph([("t1", False)],
                 [("in", "t1", "inject"), ("w", "t1", "work", {"work_units": "5"}), ("out", "t1", "sink")],
                 [("in", "w"), ("w", "out")])
    path.write_text(serialize_flow(flow))
    report = compare(["always-remote"], default_compare_workload(total_jobs=6), str(tmp_path / "out"),
                     flow_path=str(path))
    assert report.runs[0].stats.local_fraction == 1.0


def test_characterize_runs_the_experiment_flow(tmp_path):
    spec = ExperimentSpec("characterize", "sim", "always-local", default_characterize_workload(total_jobs=8),
                          str(tmp_path), OCR_FLOW_PATH)
    characterize(spec)
    characterize(ExperimentSpec("characterize", "sim", "always-local", default_characterize_workload(total_jobs=8),
                                str(tmp_path / "plain")))
    assert (tmp_path / "jobs.csv").read_bytes() == (tmp_path / "plain" / "jobs.csv").read_bytes()


def test_compare_needs_strategies(tmp_path):
    with pytest.raises(ExperimentError):
        compare([], default_compare_workload(), str(tmp_path))


def test_warm_start_keeps_an_explicit_temperature():
    assert warm_start(SimSettings()).model.t_initial_c == 70.0
    settings = SimSettings()
    warm = warm_start(settings, 60.0)
    assert warm_start(warm).model.t_initial_c == 60.0


def test_labels_and_artifact_names():
    assert strategy_label("any-of( cpu:0.75 , temp:75 )") == "any-of(cpu:0.75,temp:75)"
    assert artifact_name("any-of(cpu:0.75,temp:75)") == "any-of_cpu_0.75_temp_75"


# --- report formatting ---

def test_phase_summary_split():
    records = [JobRecord(1, "local", 24.0, True, 0.0, 24.0),
               JobRecord(2, "local", 27.0, True, 10.0, 37.0),
               JobRecord(3, "local", 29.0, True, 40.0, 69.0),
               JobRecord(4, "remote", 12.3, True, 41.0, 53.3)]
    summary = summarize_phases(records, 30.0)
    assert (summary.pre_count, summary.pre_in_band, summary.post_count) == (1, 1, 1)
    assert summary.post_mean_s == 29.0
    assert summary.pre_in_band_share == 1.0


def test_phase_summary_without_onset():
    text = format_phase_summary(summarize_phases([], None))
    assert "throttle onset: never" in text
    assert "post-throttle jobs: none" in text


def test_comparison_table_text():
    frame = comparison_frame([("jobs:4", EngineStats(120, 84, 0.7, 26.54, 33.71, 1.0)),
                              ("always-remote", EngineStats(120, 0, 0.0, 0.0, 0.0, 1.0))])
    assert list(frame["local_percent"]) == [70.0, 0.0]
    lines = format_comparison(frame).splitlines()
    assert lines[0] == "Performance with different offloading strategies"
    assert lines[2].split() == ["jobs:4", "70.0", "26.5", "33.7"]
    assert lines[3].split()[:2] == ["always-remote", "0.0"]
    assert lines[3].count("no local jobs") == 2


# --- host mode ---

@pytest.fixture
def small_flow(tmp_path):
    path = tmp_path / "flow.json"
    path.write_text(serialize_flow(split_flow("50")))
    return str(path)


def test_host_run_closed_loop(small_flow, tmp_path):
    run = run_host_strategy(small_flow, "always-local", WorkloadSpec.closed_loop(2, 5), str(tmp_path),
                            sample_period_ms=50)
    assert run.stats.jobs_total == 5
    assert run.stats.local_fraction == 1.0
    assert run.stats.success_ratio == 1.0
    assert os.path.exists(run.jobs_path)
    assert os.path.exists(run.timeseries_path)


def test_host_run_open_loop(small_flow, tmp_path):
    run = run_host_strategy(small_flow, "always-local", WorkloadSpec.open_loop(3, 0.01), str(tmp_path),
                            sample_period_ms=50)
    assert run.stats.jobs_total == 3
    assert run.stats.local_count == 3


def test_host_run_needs_an_endpoint_for_offloading_policies(small_flow, tmp_path):
    with pytest.raises(ExperimentError):
        run_host_strategy(small_flow, "jobs:4", WorkloadSpec.closed_loop(1, 1), str(tmp_path))


def test_host_run_needs_a_flow(tmp_path):
    with pytest.raises(ExperimentError):
        run_host_strategy(None, "always-local", WorkloadSpec.closed_loop(1, 1), str(tmp_path))


# --- config ---

def test_config_overrides_sections(tmp_path):
    path = tmp_path / "config.json"
    path.write_text('{"gateway": {"t_limit_c": 85.0}, "workload": {"seed": 3}}')
    config = load_config(str(path))
    assert config["gateway"] == {"t_limit_c": 85.0}
    assert config["remote"] == {}


@pytest.mark.parametrize("text", ['{"gpu": {}}', '{"gateway": {"fan": true}}', '[]', '{"gateway": 3}', '{'])
def test_config_rejects_bad_documents(tmp_path, text):
    path = tmp_path / "config.json"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(str(path))


# --- command line ---

def test_cli_unknown_command():
    assert main(["benchmark"]) == 1


def test_cli_bad_policy(tmp_path):
    assert main(["compare", "--strategy", "gpu:3", "--out", str(tmp_path)]) == 1


def test_cli_out_of_range_policy(tmp_path):
    assert main(["compare", "--policy", "cpu:1.5", "--out", str(tmp_path)]) == 1


def test_cli_characterize_check(tmp_path, capsys):
    assert main(["characterize", "--out", str(tmp_path), "--check"]) == 0
    output = capsys.readouterr().out
    assert "Gateway performance without offloading" in output
    assert "all checks passed" in output


def test_cli_characterize_on_host_is_a_runtime_error(tmp_path):
    assert main(["characterize", "--mode", "host", "--out", str(tmp_path)]) == 2


def test_cli_failed_checks(tmp_path):
    config = tmp_path / "config.json"
    config.write_text('{"gateway": {"t_limit_c": 95.0}}')
    assert main(["characterize", "--config", str(config), "--out", str(tmp_path / "out"), "--check"]) == 3


def test_cli_missing_config(tmp_path):
    assert main(["characterize", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2


def test_cli_compare_small_run(tmp_path, capsys):
    assert main(["compare", "--strategy", "jobs:4", "--strategy", "always-remote", "--jobs", "8",
                 "--out", str(tmp_path)]) == 0
    assert "Performance with different offloading strategies" in capsys.readouterr().out
    assert (tmp_path / "report.csv").exists()


def test_cli_compare_with_a_flow(tmp_path):
    assert main(["compare", "--strategy", "jobs:4", "--jobs", "8", "--flow", OCR_FLOW_PATH,
                 "--out", str(tmp_path)]) == 0


def test_cli_missing_flow(tmp_path):
    assert main(["characterize", "--flow", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2


def test_cli_rewrite(tmp_path):
    assert main(["rewrite", "--flow", OCR_FLOW_PATH, "--remote-url", "http://edge-cloud:1880",
                 "--out", str(tmp_path)]) == 0
    local = load_flow(str(tmp_path / "local.json"))
    remote = load_flow(str(tmp_path / "remote.json"))
    assert validate(local) == [] and validate(remote) == []
    olink = local.node("tab-ocr-olink")
    assert olink.kind == "offload-link"
    assert olink.config["remote_url"] == "http://edge-cloud:1880"
    assert [tab.id for tab in remote.tabs] == ["tab-ocr"]


def test_cli_rewrite_needs_an_endpoint(tmp_path, monkeypatch):
    monkeypatch.delenv("EDGEFLOW_REMOTE_URL", raising=False)
    assert main(["rewrite", "--flow", OCR_FLOW_PATH, "--out", str(tmp_path)]) == 1


def test_cli_rewrite_needs_a_flow(tmp_path):
    assert main(["rewrite", "--remote-url", "http://edge-cloud:1880", "--out", str(tmp_path)]) == 1
