import json

import pytest

from orbitsym import __version__
from orbitsym.cli import EXIT_IO, EXIT_OK, EXIT_USAGE, main
from orbitsym.services import CheckpointService

SMALL = [
    "--set", "epochs=2",
    "--set", "batch=16",
    "--set", "samples_eval=2",
    "--set", "base_hidden=16",
    "--set", "base_depth=2",
    "--set", "symmetrizer.hidden=16",
    "--set", "symmetrizer.depth=2",
    "--set", "symmetrizer.d_eps=4",
    "--set", "data.n_train=32",
    "--set", "data.n_val=16",
    "--set", "data.n_test=16",
]


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_unknown_command_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["fit"])
    assert info.value.code == EXIT_USAGE


def test_check_unknown_group(capsys):
    assert main(["check", "--group", "so99", "--quiet"]) == EXIT_USAGE
    assert "so99" in capsys.readouterr().err


def test_check_needs_trials():
    assert main(["check", "--group", "so2", "--trials", "0"]) == EXIT_USAGE


def test_check_passes(capsys):
    assert main(["check", "--group", "so2", "--trials", "100"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "intra-orbit" in out and "triangle" in out


def test_unknown_config_key(tmp_path, capsys):
    code = main(["gen-data", "--out", str(tmp_path), "--set", "symmetrizer.width=3"])
    assert code == EXIT_USAGE
    assert "symmetrizer.width" in capsys.readouterr().err


def test_train_without_data(tmp_path):
    assert main(["train", "--out", str(tmp_path), "--quiet"] + SMALL) == EXIT_IO


def test_eval_without_checkpoint(tmp_path):
    assert main(["eval", "--out", str(tmp_path), "--quiet"]) == EXIT_IO


def test_gen_data_is_byte_stable(tmp_path):
    for folder in ("a", "b"):
        assert main(["gen-data", "--out", str(tmp_path / folder), "--seed", "4", "--quiet"] + SMALL) == EXIT_OK
    for name in ("train.csv", "val.csv", "test.csv", "dataset.json"):
        assert (tmp_path / "a" / "data" / name).read_bytes() == (tmp_path / "b" / "data" / name).read_bytes()


def test_train_rejects_dataset_of_other_task(tmp_path):
    out = str(tmp_path)
    assert main(["gen-data", "--out", out, "--quiet", "--task", "rotated-digits",
                 "--set", "data.n_train=4", "--set", "data.n_val=2", "--set", "data.n_test=2"]) == EXIT_OK
    assert main(["train", "--out", out, "--quiet"] + SMALL) == EXIT_USAGE


def test_gen_train_eval(tmp_path):
    out = str(tmp_path)
    assert main(["gen-data", "--out", out, "--quiet"] + SMALL) == EXIT_OK
    assert main(["train", "--out", out, "--quiet", "--workers", "2"] + SMALL) == EXIT_OK
    for name in ("checkpoint.osym", "metrics.csv", "config.json"):
        assert (tmp_path / name).exists()
    history = CheckpointService.read_metrics(tmp_path / "metrics.csv")
    assert [row["epoch"] for row in history] == [1, 2]

    assert main(["eval", "--out", out, "--quiet", "--transforms", "2", "--probe-size", "8"]) == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert report["task"] == "particle" and report["metric_name"] == "mse"
    assert set(report["metrics"]) == {"test"}
    assert report["probe"]["transforms"] == 2
    assert report["probe"]["relative_mean"] <= 1e-6
    assert report["metrics"]["test"]["metric"] >= 0.0


def test_eval_is_seeded(tmp_path):
    out = str(tmp_path)
    assert main(["gen-data", "--out", out, "--quiet"] + SMALL) == EXIT_OK
    assert main(["train", "--out", out, "--quiet", "--set", "epochs=1"] + SMALL[2:]) == EXIT_OK
    reports = []
    for name in ("one.json", "two.json"):
        assert main(["eval", "--out", out, "--quiet", "--report", str(tmp_path / name)]) == EXIT_OK
        reports.append(json.loads((tmp_path / name).read_text(encoding="utf-8"))["metrics"])
    assert reports[0] == reports[1]


def test_eval_rejects_config_overrides(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["eval", "--out", out, "--quiet", "--set", "epochs=1"]) == EXIT_USAGE
    assert "--set" in capsys.readouterr().err
    config = tmp_path / "other.json"
    config.write_text("{}", encoding="utf-8")
    assert main(["eval", "--out", out, "--quiet", "--config", str(config)]) == EXIT_USAGE
