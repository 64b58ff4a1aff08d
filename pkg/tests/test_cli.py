import json

import pytest

from connlab.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main


def run(*argv):
    return main([str(a) for a in argv])


def usage_exit(*argv):
    with pytest.raises(SystemExit) as exc:
        run(*argv)
    return exc.value.code


@pytest.fixture(scope="module")
def logs(tmp_path_factory):
    d = tmp_path_factory.mktemp("logs")
    out = d / "logs.jsonl"
    assert run("simulate", "--preset", "field-logs", "--n", 3000, "--seed", 7, "--out", out,
               "--traces", d / "traces.jsonl") == EXIT_OK
    return out


@pytest.fixture(scope="module")
def cands(tmp_path_factory):
    out = tmp_path_factory.mktemp("cands") / "cands.jsonl"
    assert run("simulate", "--preset", "field-candidates", "--n", 600, "--seed", 1, "--out", out) == EXIT_OK
    return out


def test_simulate_is_byte_identical(logs, tmp_path):
    again = tmp_path / "again.jsonl"
    assert run("simulate", "--preset", "field-logs", "--n", 3000, "--seed", 7, "--out", again) == EXIT_OK
    assert again.read_bytes() == logs.read_bytes()
    assert json.loads((tmp_path / "again.jsonl.calibration.json").read_text())["fitted"]


def test_simulate_zero(tmp_path):
    out = tmp_path / "empty.jsonl"
    assert run("simulate", "--preset", "field-logs", "--n", 0, "--out", out) == EXIT_OK
    assert out.read_text() == ""


def test_csv_output(tmp_path):
    out = tmp_path / "x.csv"
    assert run("simulate", "--preset", "field-logs", "--n", 50, "--format", "csv", "--out", out) == EXIT_OK
    assert out.read_text().splitlines()[0].startswith("attempt_id")


def test_analyze(logs, tmp_path):
    out = tmp_path / "rep"
    assert run("analyze", "--input", logs, "--traces", logs.parent / "traces.jsonl", "--out", out) == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert "correlation" in rep and (out / "transitions.csv").exists()
    assert (out / "success_time_cdf.csv").read_text().startswith("connection_time_ms")


def test_analyze_class_filter(logs, tmp_path):
    assert run("analyze", "--input", logs, "--out", tmp_path, "--class", "15-30") == EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert set(rep["scan_time_quantiles"]) <= {"15-30"}
    assert run("analyze", "--input", logs, "--out", tmp_path, "--class", "1-2") == EXIT_USAGE


def test_analyze_empty_input(tmp_path):
    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    assert run("analyze", "--input", empty, "--out", tmp_path / "r") == EXIT_DATA


def test_missing_input(tmp_path):
    assert run("analyze", "--input", tmp_path / "nope.jsonl", "--out", tmp_path) == EXIT_DATA


def test_train_then_select(logs, cands, tmp_path):
    model = tmp_path / "m.bin"
    metrics = tmp_path / "metrics.json"
    assert run("train", "--input", logs, "--out", model, "--trees", 10, "--metrics", metrics) == EXIT_OK
    assert json.loads(metrics.read_text())["validation"]["n_test"] > 0
    dec = tmp_path / "dec.jsonl"
    assert run("select", "--model", model, "--input", cands, "--out", dec) == EXIT_OK
    assert len(dec.read_text().splitlines()) == 600


def test_eval_and_replay_saved_model(cands, tmp_path):
    out, model = tmp_path / "e.json", tmp_path / "m.bin"
    assert run("eval", "--input", cands, "--trees", 10, "--out", out, "--save-model", model) == EXIT_OK
    first = json.loads(out.read_text())
    assert first["n_tuning"] + first["n_replay"] == 600
    out2 = tmp_path / "e2.json"
    assert run("eval", "--input", cands, "--model", model, "--out", out2) == EXIT_OK
    assert json.loads(out2.read_text())["ml"] == first["ml"]


def test_corrupt_model(cands, tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"garbage")
    assert run("select", "--model", bad, "--input", cands) == EXIT_DATA


def test_config_show_and_validate(tmp_path):
    out = tmp_path / "c.json"
    assert run("config", "show", "--preset", "field-candidates", "--out", out) == EXIT_OK
    assert json.loads(out.read_text())["kind"] == "candidates"
    assert run("config", "validate", "--config", out) == EXIT_OK
    bad = tmp_path / "bad.json"
    bad.write_text('{"kind": "logs", "config": {"n_attempts": -5, "templates": []}}')
    assert run("config", "validate", "--config", bad) == EXIT_DATA


def test_usage_errors():
    assert usage_exit("simulate", "--out", "x", "--bogus") == EXIT_USAGE
    assert usage_exit("frobnicate") == EXIT_USAGE
    assert usage_exit("simulate", "--preset", "field-logs", "--n", "-3", "--out", "x") == EXIT_USAGE
    assert run("simulate", "--out", "x") == EXIT_USAGE


def test_bad_forest_params(logs, tmp_path):
    assert run("train", "--input", logs, "--out", tmp_path / "m", "--class-weight", 2) == EXIT_USAGE
