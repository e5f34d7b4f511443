import json
import math
import subprocess
import sys
from importlib import resources
from xml.etree import ElementTree

import pytest

from clamsense import __version__
from clamsense.cli import main
from clamsense.metrics import read_csv_body, strip_volatile
from clamsense.synth import desk_ofdm


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _bundled_scene() -> dict:
    return json.loads(resources.files("clamsense").joinpath("data", "table3.json").read_text())


def test_version_and_help(capsys):
    code, out, _ = _run(capsys, "--version")
    assert code == 0 and __version__ in out
    assert _run(capsys, "--help")[0] == 0


def test_scene_validate_ok(capsys):
    code, out, _ = _run(capsys, "scene", "validate", "bundled:table3")
    assert code == 0
    report = json.loads(out)
    assert len(report["paths"]) == 6
    t1 = next(p for p in report["paths"] if p["label"] == "Target 1")
    assert (t1["azimuth_deg"], t1["zenith_deg"], t1["doppler_hz"]) == (52.4, 126.0, 3733.3)
    assert t1["delay_us"] == pytest.approx(4.5)


def test_scene_validate_rejects_delay_beyond_cp(capsys, tmp_path):
    sc = _bundled_scene()
    sc["paths"][0]["delay_us"] = 50.0
    f = tmp_path / "long.json"
    f.write_text(json.dumps(sc))
    code, out, err = _run(capsys, "scene", "validate", str(f))
    assert code == 2 and out == ""
    payload = json.loads(err)
    assert payload["error"] == "config"
    assert "T_CP" in payload["precondition"] and "cyclic prefix" in payload["message"]


def test_missing_file_and_bad_args(capsys, tmp_path):
    code, _, err = _run(capsys, "scene", "validate", str(tmp_path / "nope.json"))
    assert code == 2 and json.loads(err)["precondition"] == "scene exists"
    code, _, err = _run(capsys, "pipeline", "run", "--scene", "bundled:table3", "--method", "esprit")
    assert code == 2 and json.loads(err)["precondition"] == "method"
    code, _, err = _run(capsys, "complexity", "table", "--m", "0")
    assert code == 2
    code, _, err = _run(capsys, "frobnicate")
    assert code == 2 and json.loads(err)["precondition"] == "command line"


def test_complexity_fig6(capsys, tmp_path):
    code, out, _ = _run(capsys, "complexity", "table", "--fig6", "--out", str(tmp_path), "--svg")
    assert code == 0
    rows = read_csv_body(tmp_path / "complexity.csv")
    assert len(rows) == 7
    assert list(rows[0]) == ["algorithm", "M=16", "M=64", "M=256", "M=1024"]
    fft = next(r for r in rows if r["algorithm"] == "fft")
    assert all(v == "629145600" for k, v in fft.items() if k != "algorithm")
    root = ElementTree.parse(tmp_path / "complexity.svg").getroot()
    assert root.tag.endswith("svg")


def test_output_dir_from_environment(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("CLAMSENSE_OUTPUT_DIR", str(tmp_path / "env"))
    assert _run(capsys, "complexity", "table", "--m", "16")[0] == 0
    assert (tmp_path / "env" / "complexity.csv").is_file()


def test_every_output_has_header(capsys, tmp_path):
    assert _run(capsys, "mti", "demo", "--out", str(tmp_path))[0] == 0
    for name in ("mti_time.csv", "mti_spectrum.csv"):
        lines = (tmp_path / name).read_text().splitlines()
        assert lines[0] == f"# clamsense {__version__} {name[:-4].replace('_', '-')}"
        cfg = json.loads(lines[1][len("# config: "):])
        assert cfg["command"] == "mti demo" and cfg["order"] == 1
        assert lines[2].startswith("# created:")
    rows = read_csv_body(tmp_path / "mti_time.csv")
    assert len(rows) == 2000


def test_mti_demo_bad_period(capsys, tmp_path):
    code, _, err = _run(capsys, "mti", "demo", "--period", "0.00033", "--out", str(tmp_path))
    assert code == 2 and "integer number of samples" in json.loads(err)["message"]


def test_pipeline_run_noiseless_joint_music(capsys, tmp_path):
    code, out, _ = _run(capsys, "pipeline", "run", "--scene", "bundled:table3", "--method", "joint-music",
                        "--snr", "off", "--seed", "1", "--out", str(tmp_path))
    assert code == 0
    assert out.split() == [str(tmp_path / f"joint-music_{k}.csv") for k in ("estimates", "spectrum", "polar")]
    rows = read_csv_body(tmp_path / "joint-music_estimates.csv")
    finals = [r for r in rows if r["stage"] == "Final"]
    assert len(finals) == 3
    ofdm = desk_ofdm()
    half_tau_us = 0.5 / (ofdm.delta_f_hz * 5 * ofdm.n_sc) * 1e6
    half_fd = 0.5 / (ofdm.t_s_s * 5 * ofdm.n_sym)
    truths = [(52.4, 126.0, 4.5, 3733.3), (66.8, 92.0, 3.74, 373.3), (113.8, 141.0, 3.74, 373.3)]
    for az, zen, tau, fd in truths:
        f = min(finals, key=lambda r: math.hypot(float(r["azimuth_deg"]) - az, float(r["zenith_deg"]) - zen))
        assert abs(float(f["azimuth_deg"]) - az) <= 0.5 and abs(float(f["zenith_deg"]) - zen) <= 0.5
        assert abs(float(f["delay_us"]) - tau) <= half_tau_us
        assert abs(float(f["doppler_hz"]) - fd) <= half_fd
    polar = read_csv_body(tmp_path / "joint-music_polar.csv")
    assert {r["label"] for r in polar} == {"Target 1", "Target 2", "Target 3", "estimate"}

    assert _run(capsys, "plotdata", "fig10", "--polar", str(tmp_path / "joint-music_polar.csv"),
                "--out", str(tmp_path))[0] == 0
    assert len(read_csv_body(tmp_path / "fig10_series.csv")) == len(polar)


def test_pipeline_run_is_reproducible(capsys, tmp_path):
    args = ["pipeline", "run", "--scene", "bundled:table3_sparse", "--method", "spatial-music", "--snr", "0",
            "--seed", "4", "--n-sc", "32", "--n-sym", "8"]
    for d in ("a", "b"):
        assert _run(capsys, *args, "--out", str(tmp_path / d))[0] == 0
    for name in ("spatial-music_estimates.csv", "spatial-music_spectrum.csv"):
        a = (tmp_path / "a" / name).read_text()
        b = (tmp_path / "b" / name).read_text()
        assert strip_volatile(a) == strip_volatile(b)


def test_pipeline_rejects_too_many_sources(capsys):
    code, _, err = _run(capsys, "pipeline", "run", "--scene", "bundled:table3", "--array", "2", "2")
    assert code == 2 and json.loads(err)["precondition"] == "L+S < M"


def test_clam_build_and_lookup(capsys, tmp_path):
    out = tmp_path / "map.json"
    code, _, _ = _run(capsys, "clam", "build", "--scene", "bundled:table3", "--origin", "0", "-50",
                      "--cell-size", "50", "--nx", "4", "--ny", "2", "--n-clutter", "3", "-o", str(out))
    assert code == 0 and out.is_file()
    code, text, _ = _run(capsys, "clam", "lookup", "--map", str(out), "--ue", "100", "0", "0")
    assert code == 0
    assert sorted(map(tuple, json.loads(text)["clutter_doas_deg"])) == sorted(
        [(84.3, 65.0), (38.7, 46.0), (111.8, 143.0)])
    code, _, err = _run(capsys, "clam", "lookup", "--map", str(out), "--ue", "1000", "0", "0")
    assert code == 2


def test_experiment_and_plotdata(capsys, tmp_path):
    spec = {"name": "tiny", "scene": "bundled:table3_sparse", "methods": ["music", "spatial-music"],
            "snr_db": [0, 10], "trials": 2, "seed": 5, "n_sc": 32, "n_sym": 8}
    f = tmp_path / "tiny.json"
    f.write_text(json.dumps(spec))
    assert _run(capsys, "experiment", "run", str(f), "--out", str(tmp_path))[0] == 0
    summary = tmp_path / "tiny_summary.csv"
    assert len(read_csv_body(summary)) == 4
    assert _run(capsys, "plotdata", "fig7", "--summary", str(summary), "--out", str(tmp_path))[0] == 0
    series = read_csv_body(tmp_path / "fig7_series.csv")
    assert [r["snr_db"] for r in series] == ["0.0", "10.0"]
    assert set(series[0]) == {"snr_db", "music", "spatial-music"}
    code, _, err = _run(capsys, "plotdata", "fig8", "--summary", str(tmp_path / "tiny_trials.csv"),
                        "--out", str(tmp_path))
    assert code == 2 and json.loads(err)["precondition"] == "summary schema"


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "clamsense.cli", "complexity", "table", "--m", "16",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip().endswith("complexity.csv")


def test_method_list_in_help_matches_registry(capsys):
    from clamsense.cli import METHOD_NAMES
    from clamsense.pipelines import METHODS

    assert set(METHOD_NAMES) == set(METHODS)
    assert _run(capsys, "joint", "run", "--help")[0] == 0
