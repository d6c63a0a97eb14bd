"""Command-line surface: exit codes, printed values and written files."""

import csv
import json

import pytest

from tesjitter.cli import main
from tesjitter.traceio import HEADER, MAGIC

SMALL = ["--seed", "7"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_predict_prints_model_values(capsys):
    code, out, _ = run(capsys, "predict")
    assert code == 0
    assert "predicted jitter FWHM : 3.7556 ns" in out
    assert "tau_ext               : 17.5000 ns" in out
    assert "optimal L             : 31.5000 nH" in out
    assert "best corner           : 3.694 ns" in out


def test_predict_bandwidth_flag(capsys):
    code, out, _ = run(capsys, "predict", "--bandwidth", "20e6")
    assert code == 0 and "tau_ext               : 17.5000 ns" in out
    code, out, _ = run(capsys, "predict", "--bandwidth", "35 MHz")
    assert code == 0 and "tau_ext               : 10.0000 ns" in out


def test_predict_json(tmp_path, capsys):
    path = tmp_path / "p.json"
    assert run(capsys, "predict", "--inductance", "24 nH", "--out", str(path))[0] == 0
    rep = json.loads(path.read_text())
    rows = dict(rep["prediction"]["rows"])
    assert rows["jitter_fwhm"] == pytest.approx(3.755583621646005e-09, rel=1e-12)
    assert rep["provenance"]["tool"] == "tesjitter" and "config_hash" in rep["provenance"]


@pytest.mark.parametrize("argv, field", [
    (["predict", "--inductance", "0"], "inductance"),
    (["predict", "--eta", "2"], "eta"),
    (["predict", "--inductance", "24 ns"], "inductance"),
    (["sweep", "--grid", "5nH:1nH:10"], "grid"),
    (["sweep", "--grid", "nonsense"], "grid"),
])
def test_invalid_input_exits_1(capsys, argv, field):
    code, _, err = run(capsys, *argv)
    assert code == 1 and field in err


def test_unknown_flag_exits_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["predict", "--nope"])
    assert exc.value.code == 1


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"device": {"amp_bandwidth": "35 MHz"}}))
    assert "10.0000 ns" in run(capsys, "predict", "--config", str(cfg))[1]
    assert "17.5000 ns" in run(capsys, "predict", "--config", str(cfg), "--bandwidth", "20 MHz")[1]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"device": {"alpha": -3}}))
    code, _, err = run(capsys, "predict", "--config", str(bad))
    assert code == 1 and "alpha" in err


def test_sweep_csv(tmp_path, capsys):
    path = tmp_path / "s.csv"
    assert run(capsys, "sweep", "--grid", "5nH:100nH:96", "--out", str(path))[0] == 0
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["inductance_nH", "lower_ns", "upper_ns"]
    assert len(rows) == 97
    vals = [[float(x) for x in r] for r in rows[1:]]
    assert vals[0][0] == pytest.approx(5.0) and vals[-1][0] == pytest.approx(100.0)
    assert all(lo <= hi for _, lo, hi in vals)
    code, out, _ = run(capsys, "sweep")
    assert code == 0 and len(out.splitlines()) == 52


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    trace = d / "t.tesb"
    assert main(["simulate", "--traces", "10000", "--out", str(trace)] + SMALL) == 0
    out = d / "an"
    code = main(["analyze", str(trace), "--out", str(out), "--thresholds", "0.3,0.5,0.7"] + SMALL)
    return d, trace, out, code


def test_simulate_and_analyze(small_run):
    _, _, out, code = small_run
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["provenance"]["seed"] == 7
    assert rep["summary"]["partial"] is False
    assert sorted({r[1] for r in rep["jitter"]["rows"]}) == [0.3, 0.5, 0.7]
    assert rep["jitter"]["units"][rep["jitter"]["columns"].index("fwhm")] == "s"
    assert rep["closure"]["classification_accuracy_n_le_3"] > 0.99
    for name in ("area_histogram.csv", "mean_pulses.csv", "crossing_histograms.csv",
                 "jitter_vs_threshold.csv"):
        assert (out / name).stat().st_size > 0


def test_sweep_overlays_measured_points(small_run, capsys):
    _, _, out, _ = small_run
    code, text, _ = run(capsys, "sweep", "--report", str(out / "report.json"))
    rows = list(csv.reader(text.splitlines()))
    assert code == 0 and rows[0][-2:] == ["measured_min_ns", "measured_max_ns"]
    marked = [r for r in rows[1:] if r[3]]
    assert len(marked) == 1 and float(marked[0][0]) == pytest.approx(24.0)


def test_single_peak_file_gives_partial_report(tmp_path, capsys):
    trace = tmp_path / "dim.tesb"
    assert run(capsys, "simulate", "--traces", "3000", "--mean-photons", "0.02", "--out",
               str(trace))[0] == 0
    code, _, err = run(capsys, "analyze", str(trace), "--out", str(tmp_path / "a"))
    assert code == 3 and "classification unavailable" in err
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    assert rep["summary"]["partial"] is True


def test_noise_only_file_is_a_hard_failure(tmp_path, capsys):
    trace = tmp_path / "noise.tesb"
    run(capsys, "simulate", "--traces", "500", "--mean-photons", "0", "--out", str(trace))
    code, _, err = run(capsys, "analyze", str(trace), "--out", str(tmp_path / "a"))
    assert code == 2 and "noise" in err


def test_empty_or_missing_trace_file_exits_2(tmp_path, capsys):
    empty = tmp_path / "empty.tesb"
    empty.write_bytes(HEADER.pack(MAGIC, 1, 0, 8, 1.25e9, 2.0, 0, 3456))
    assert run(capsys, "analyze", str(empty), "--out", str(tmp_path / "x"))[0] == 2
    assert run(capsys, "analyze", str(tmp_path / "missing.tesb"))[0] == 2


def test_unwritable_output_exits_2(tmp_path, capsys):
    target = tmp_path / "no" / "such" / "dir" / "t.tesb"
    assert run(capsys, "simulate", "--traces", "2", "--out", str(target))[0] == 2


def test_bad_trace_count_exits_1(tmp_path, capsys):
    assert run(capsys, "simulate", "--traces", "0", "--out", str(tmp_path / "t"))[0] == 1
