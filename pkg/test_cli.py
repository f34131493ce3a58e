import json

import numpy as np
import pandas as pd
import pytest

from eventcast.models.config import RunConfig
from eventcast.services.pipeline_service import PipelineService
from main import build_parser, run_command


def last_json_line(text: str) -> dict:
    return json.loads(text.strip().splitlines()[-1])


# === PARSING ===

def test_usage_errors_exit_two(capsys):
    assert run_command([]) == 2
    assert run_command(["fit", "--bogus"]) == 2
    assert run_command(["frobnicate"]) == 2
    capsys.readouterr()


def test_run_options_work_before_and_after_the_command():
    parser = build_parser()
    before = parser.parse_args(["--seed", "4", "synth", "--days", "40"])
    after = parser.parse_args(["synth", "--days", "40", "--seed", "4"])
    assert before.seed == after.seed == 4
    assert before.days == 40


def test_fit_help_gives_the_design_widths(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["fit", "--help"])
    text = " ".join(capsys.readouterr().out.split())
    assert "96 columns" in text
    assert "keeps all 111" in text


# === ERRORS ===

def test_unknown_config_key_is_reported_as_json(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nhour_dim = 12\nbogus = 1\n")
    assert run_command(["ingest", "--config", str(cfg), "--output-dir", str(tmp_path / "out")]) == 1
    err = last_json_line(capsys.readouterr().err)
    assert err["error"] == "config_error"
    assert "bogus" in err["message"]


def test_invalid_config_value(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("horizons = 1,0\n")
    assert run_command(["ingest", "--config", str(cfg)]) == 1
    assert last_json_line(capsys.readouterr().err)["type"] == "ConfigError"


def test_missing_inputs(tmp_path, capsys):
    assert run_command(["ingest", "--data-dir", str(tmp_path / "nothing"), "--output-dir", str(tmp_path / "out")]) == 1
    err = last_json_line(capsys.readouterr().err)
    assert err["error"] == "config_error"
    assert "events" in err["message"]


def test_synth_rejects_short_ranges(tmp_path, capsys):
    assert run_command(["synth", "--days", "10", "--out", str(tmp_path)]) == 1
    assert last_json_line(capsys.readouterr().err)["error"] == "config_error"


# === RUNS ===

def test_synth_then_ingest(tmp_path, capsys):
    data_dir, out = tmp_path / "data", tmp_path / "out"
    assert run_command(["--seed", "4", "synth", "--days", "90", "--out", str(data_dir)]) == 0
    for name in ("events", "weather", "covid", "flu", "regions"):
        assert (data_dir / f"{name}.csv").is_file()
    manifest = json.loads((data_dir / "run_manifest.json").read_text())
    assert manifest["command"] == "synth" and manifest["seed"] == 4
    assert "truth.json" in manifest["artifacts"]

    assert run_command(["ingest", "--data-dir", str(data_dir), "--output-dir", str(out)]) == 0
    frame = pd.read_csv(out / "frame.csv")
    expected = PipelineService(RunConfig(data_dir=str(data_dir))).load().frame
    assert len(frame) == len(expected)
    rt = pd.read_csv(out / "rt.csv")
    assert list(rt.columns) == ["date", "rt", "credible"]
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["dropped"]["Plain"]["total"] == expected.dropped["total"]
    assert manifest["config"]["data_dir"] == str(data_dir)
    capsys.readouterr()


def test_unknown_region_in_events_exits_one(tmp_path, capsys):
    data_dir = tmp_path / "data"
    assert run_command(["synth", "--days", "40", "--out", str(data_dir), "--quiet"]) == 0
    with open(data_dir / "events.csv", "a") as fh:
        fh.write("Atlantis,2019-01-05T03:00,2\n")
    assert run_command(["ingest", "--data-dir", str(data_dir), "--output-dir", str(tmp_path / "out")]) == 1
    err = last_json_line(capsys.readouterr().err)
    assert err["error"] == "invalid_data"
    assert "Atlantis" in err["message"]


def test_shuffled_event_rows_give_the_same_frame(tmp_path, capsys):
    data_dir = tmp_path / "data"
    assert run_command(["synth", "--days", "60", "--seed", "2", "--out", str(data_dir), "--quiet"]) == 0
    assert run_command(["ingest", "--data-dir", str(data_dir), "--output-dir", str(tmp_path / "a"), "--quiet"]) == 0
    events = pd.read_csv(data_dir / "events.csv", dtype=str)
    events.sample(frac=1.0, random_state=5).to_csv(data_dir / "events.csv", index=False)
    assert run_command(["ingest", "--data-dir", str(data_dir), "--output-dir", str(tmp_path / "b"), "--quiet"]) == 0
    for name in ("frame.csv", "rt.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    capsys.readouterr()


@pytest.fixture(scope="module")
def year_of_data(tmp_path_factory):
    data_dir = tmp_path_factory.mktemp("year")
    assert run_command(["synth", "--days", "400", "--seed", "9", "--out", str(data_dir), "--quiet"]) == 0
    return data_dir


@pytest.mark.slow
def test_fit_then_effects_from_saved_model(year_of_data, tmp_path):
    out = tmp_path / "fit"
    assert run_command(["fit", "--data-dir", str(year_of_data), "--output-dir", str(out), "--quiet"]) == 0
    summary = pd.read_csv(out / "summary.csv")
    assert {"hour", "day", "quarter", "day_hour"} <= set(summary["term"])

    effects_out = tmp_path / "effects"
    argv = ["effects", "--model", str(out / "model.json"), "--term", "hour", "--term", "day_hour", "--output-dir", str(effects_out)]
    assert run_command(argv + ["--quiet"]) == 0
    curve = pd.read_csv(effects_out / "effects_hour.csv")
    assert list(curve.columns) == ["x", "effect"]
    assert len(curve) == 200
    assert abs(curve["effect"].mean()) < 1e-9
    # the synthetic hour effect peaks mid-afternoon
    assert 11.0 <= curve.loc[curve["effect"].idxmax(), "x"] <= 17.0
    assert (effects_out / "effects_day_hour.svg").is_file()
    assert run_command(["effects", "--model", str(out / "model.json"), "--term", "nope", "--output-dir", str(effects_out)]) == 1


@pytest.mark.slow
def test_evaluate_is_reproducible(year_of_data, tmp_path):
    argv = [
        "evaluate",
        "--data-dir", str(year_of_data),
        "--horizons", "1,2",
        "--min-history-days", "380",
        "--eval-days", "3",
        "--quiet",
    ]
    first, second = tmp_path / "a", tmp_path / "b"
    assert run_command(argv + ["--output-dir", str(first)]) == 0
    assert run_command(argv + ["--output-dir", str(second), "--threads", "2"]) == 0

    report = pd.read_csv(first / "report.csv")
    assert len(report) == 3 * 2
    assert (first / "report.csv").read_bytes() == (second / "report.csv").read_bytes()
    mae = pd.read_csv(first / "mae.csv")
    assert mae["horizon_days"].tolist() == [1, 2]
    assert np.isfinite(mae["mae_pct"]).all()

    bench = pd.read_csv(first / "benchmark.csv")
    assert set(bench["method"]) == {"gam", "arima", "naive", "ingarch"}
    assert len(bench) == 8
    for name in ("errors.svg", "forecast.svg", "run_manifest.json"):
        assert (first / name).is_file()
