import subprocess
import sys

import pytest

from rftensor.cli import COMMANDS, main
from rftensor.io import read_csv, read_t3f

TINY = """\
[scene]
counts = 8 8 3
voxel_size = 1 1 2
nodes = 32

[phantom]
rank = 1

[solver]
iters = 6

[experiment]
rate = 0.9
rates = 0.8 1.0
trials = 2
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY)
    return p


EXPECTED = {
    "phantom": ["phantom.t3f", "phantom.csv"],
    "simulate": ["phantom.t3f", "ensemble.csv", "sensing.csv", "nodes.csv"],
    "recover": ["estimate.t3f", "rse.csv", "trace.csv", "timing.csv"],
    "sweep": ["sweep.csv", "sweep_summary.csv", "timing.csv"],
    "cdf": ["cdf.csv"],
    "trace": ["trace.csv", "fit.csv", "timing.csv"],
}


@pytest.mark.parametrize("command", COMMANDS)
def test_commands_write_outputs(command, cfg, tmp_path):
    out = tmp_path / "out"
    assert main([command, "--config", str(cfg), "--out", str(out)]) == 0
    for name in EXPECTED[command]:
        assert (out / name).is_file(), name


def test_recover_contents(cfg, tmp_path):
    out = tmp_path / "r"
    assert main(["recover", "--config", str(cfg), "--out", str(out), "--iters", "4"]) == 0
    rows = read_csv(out / "rse.csv")
    assert rows[0]["rate"] == "0.9" and rows[0]["iterations"] == "4"
    assert len(read_csv(out / "trace.csv")) == 4
    assert read_t3f(out / "estimate.t3f").shape == (8, 8, 3)


def test_sweep_summary(cfg, tmp_path):
    out = tmp_path / "s"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    summary = read_csv(out / "sweep_summary.csv")
    assert [r["rate"] for r in summary] == ["0.8", "1.0"]
    assert all(r["trials"] == "2" for r in summary)
    assert len(read_csv(out / "sweep.csv")) == 4


def test_rate_flag_makes_single_rate_sweep(cfg, tmp_path):
    out = tmp_path / "s"
    assert main(["sweep", "--config", str(cfg), "--out", str(out), "--rate", "0.6", "--trials", "1"]) == 0
    assert [r["rate"] for r in read_csv(out / "sweep_summary.csv")] == ["0.6"]


def test_seed_override_changes_phantom(cfg, tmp_path):
    main(["phantom", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["phantom", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "5"])
    assert (tmp_path / "a/phantom.t3f").read_bytes() != (tmp_path / "b/phantom.t3f").read_bytes()


def test_rank_flag(cfg, tmp_path):
    out = tmp_path / "p"
    assert main(["phantom", "--config", str(cfg), "--out", str(out), "--rank", "2"]) == 0
    rep = {r["key"]: r["value"] for r in read_csv(out / "phantom.csv")}
    assert rep["l_rank"] == "2" and rep["dims"] == "8x8x3"


def test_missing_config_names_path(tmp_path, capsys):
    missing = tmp_path / "missing.cfg"
    assert main(["recover", "--config", str(missing), "--out", str(tmp_path)]) == 1
    assert str(missing) in capsys.readouterr().err


def test_bad_config_value(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[experiment]\nrate = 1.5\n")
    assert main(["recover", "--config", str(p), "--out", str(tmp_path)]) == 1


def test_incompatible_backend(cfg, tmp_path):
    args = ["recover", "--config", str(cfg), "--out", str(tmp_path), "--transform", "dct", "--backend", "squeeze"]
    assert main(args) == 1


def test_unknown_command_and_flag(capsys):
    with pytest.raises(SystemExit) as e:
        main(["explode"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["recover", "--frobnicate"])
    assert e.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_non_finite_channel_is_config_error(cfg, tmp_path):
    p = tmp_path / "nan.cfg"
    p.write_text(TINY + "\n[channel]\nnoise_sigma = nan\n")
    assert main(["recover", "--config", str(p), "--out", str(tmp_path / "o")]) == 1


def test_numerical_failure_exit_code(cfg, tmp_path, monkeypatch, capsys):
    import rftensor.harness as hz
    from rftensor.rf_sim import SensingEnsemble

    # poison the measurements so the first least-squares solve fails
    real = hz.build_sensing_ensemble

    def poisoned(*a, **kw):
        H = real(*a, **kw)
        return SensingEnsemble(H.dims, H.matrix, H.y * float("nan"), H.link_ids, H.links)

    monkeypatch.setattr(hz, "build_sensing_ensemble", poisoned)
    assert main(["recover", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "iteration 1" in capsys.readouterr().err


def test_module_entry_point(cfg, tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "rftensor", "cdf", "--config", str(cfg), "--out", str(tmp_path / "m")],
        capture_output=True,
    )
    assert r.returncode == 0
    assert (tmp_path / "m/cdf.csv").is_file()
