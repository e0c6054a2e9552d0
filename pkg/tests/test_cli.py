import json

import pytest

from vit2snn import cli
from vit2snn import verify as verify_mod


TOY = ["--blocks", "1", "--dim", "16", "--heads", "2", "--mlp-dim", "32",
       "--tokens", "5", "--classes", "4", "--input-dim", "12",
       "--samples", "12", "--calib-samples", "8", "--seed", "7"]


def _make_toy(root):
    assert cli.main(["make-toy", "--out", str(root)] + TOY) == cli.EXIT_OK


def _calibrate(root, extra=()):
    return cli.main([
        "calibrate", "--model", str(root / "model"), "--data", str(root / "calib"),
        "--out", str(root / "calib.json"), "--levels", "6", *extra,
    ])


def _convert(root):
    return cli.main([
        "convert", "--model", str(root / "model"),
        "--thresholds", str(root / "calib.json"), "--out", str(root / "snn"),
    ])


def test_pipeline_end_to_end(tmp_path, capsys):
    _make_toy(tmp_path)
    assert (tmp_path / "model" / "manifest.json").is_file()
    assert (tmp_path / "data" / "data.bin").is_file()
    assert (tmp_path / "calib" / "data.json").is_file()

    assert _calibrate(tmp_path) == cli.EXIT_OK
    assert (tmp_path / "calib.json").is_file()

    assert _convert(tmp_path) == cli.EXIT_OK
    assert (tmp_path / "snn" / "snn.json").is_file()

    rc = cli.main([
        "run", "--snn", str(tmp_path / "snn"), "--data", str(tmp_path / "data"),
        "--timesteps", "3", "--report", str(tmp_path / "run.json"),
        "--csv", str(tmp_path / "sweep.csv"),
    ])
    assert rc == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "mode=mt T=3" in out
    report = json.loads((tmp_path / "run.json").read_text())
    assert report["kernel_backend"] in ("compiled", "python")
    assert len(report["per_step"]) == 3
    assert (tmp_path / "sweep.csv").read_text().startswith("metric,T=1,T=2,T=3")

    assert cli.main(["report", "--run", str(tmp_path / "run.json"),
                     "--csv", str(tmp_path / "sweep2.csv")]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "energy ratio:" in out
    assert (tmp_path / "sweep2.csv").read_text() == (tmp_path / "sweep.csv").read_text()

    assert cli.main(["oracle", "--model", str(tmp_path / "model"),
                     "--data", str(tmp_path / "data"), "--logits",
                     "--out", str(tmp_path / "oracle.json")]) == cli.EXIT_OK
    payload = json.loads((tmp_path / "oracle.json").read_text())
    assert payload["count"] == 12
    assert len(payload["predictions"]) == 12
    assert len(payload["logits"]) == 12


def test_analog_run_matches_oracle_exactly(tmp_path, capsys):
    _make_toy(tmp_path)
    assert _calibrate(tmp_path) == cli.EXIT_OK
    assert _convert(tmp_path) == cli.EXIT_OK
    rc = cli.main([
        "run", "--snn", str(tmp_path / "snn"), "--data", str(tmp_path / "data"),
        "-T", "2", "--mode", "analog_ec_only", "--precision", "f32",
    ])
    assert rc == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "agreement=1.0000" in out
    assert "logit_err=0.000e+00" in out


def test_calibrate_and_convert_are_deterministic(tmp_path):
    _make_toy(tmp_path)
    assert _calibrate(tmp_path) == cli.EXIT_OK
    first = (tmp_path / "calib.json").read_bytes()
    assert _calibrate(tmp_path) == cli.EXIT_OK
    assert (tmp_path / "calib.json").read_bytes() == first

    assert _convert(tmp_path) == cli.EXIT_OK
    blobs = {name: (tmp_path / "snn" / name).read_bytes()
             for name in ("manifest.json", "weights.bin", "snn.json")}
    assert _convert(tmp_path) == cli.EXIT_OK
    for name, blob in blobs.items():
        assert (tmp_path / "snn" / name).read_bytes() == blob


def test_io_errors_exit_1(tmp_path, capsys):
    assert cli.main(["calibrate", "--model", str(tmp_path / "nope"),
                     "--data", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "c.json")]) == cli.EXIT_IO
    assert cli.main(["run", "--snn", str(tmp_path / "nope"),
                     "--data", str(tmp_path / "nope"), "-T", "1"]) == cli.EXIT_IO
    assert cli.main(["report", "--run", str(tmp_path / "nope.json")]) == cli.EXIT_IO
    err = capsys.readouterr().err
    assert "error:" in err


def test_usage_errors_exit_2(tmp_path, capsys):
    _make_toy(tmp_path)
    assert _calibrate(tmp_path, extra=("--percent", "50")) == cli.EXIT_USAGE
    assert cli.main(["make-toy", "--out", str(tmp_path / "bad"),
                     "--dim", "30", "--heads", "4"]) == cli.EXIT_USAGE
    capsys.readouterr()


def test_conversion_errors_exit_3(tmp_path, capsys):
    _make_toy(tmp_path)
    assert _calibrate(tmp_path) == cli.EXIT_OK
    # thresholds calibrated for 1 block cannot drive a 2-block model
    big = tmp_path / "big"
    assert cli.main(["make-toy", "--out", str(big), "--blocks", "2",
                     "--dim", "16", "--heads", "2", "--mlp-dim", "32",
                     "--tokens", "5", "--classes", "4", "--input-dim", "12",
                     "--samples", "4", "--calib-samples", "4"]) == cli.EXIT_OK
    rc = cli.main(["convert", "--model", str(big / "model"),
                   "--thresholds", str(tmp_path / "calib.json"),
                   "--out", str(tmp_path / "snn-bad")])
    assert rc == cli.EXIT_CONVERT
    assert "invalid conversion" in capsys.readouterr().err


def test_verify_command_reports_and_exits(tmp_path, capsys, monkeypatch):
    rc = cli.main(["verify", "--suite", "naive", "--suite", "complexity",
                   "--out", str(tmp_path / "verify.json")])
    assert rc == cli.EXIT_OK
    out = capsys.readouterr().out
    assert out.count("PASS") == 2
    payload = json.loads((tmp_path / "verify.json").read_text())
    assert set(payload["suites"]) == {"naive", "complexity"}
    assert payload["kernel_backend"] in ("compiled", "python")

    def fake_run_suites(names, cases=None, seed=0):
        return [verify_mod.SuiteResult(name="naive", passed=False, checks=1,
                                       seconds=0.0, failures=["synthetic failure"])]

    monkeypatch.setattr(verify_mod, "run_suites", fake_run_suites)
    rc = cli.main(["verify", "--suite", "naive"])
    assert rc == cli.EXIT_VERIFY
    out = capsys.readouterr().out
    assert "FAIL" in out and "synthetic failure" in out


def test_unknown_subcommand_is_rejected():
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])
