import json
import socket
import subprocess
import sys
from pathlib import Path


from fedbrainage.cli import main

CONFIG = {
    "cohort": {"generate": {"n_centers": 4, "subjects_per_center": [90, 45, 35, 30], "n_radiomic_features": 8, "seed": 11}},
    "families": ["vol_simple"],
    "epochs": 8,
    "tune_l2": False,
    "seeds": [0],
}


def _write_config(tmp_path, **overrides):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({**CONFIG, **overrides}))
    return path


def _snapshot(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _pipeline(config, out):
    for cmd in ("generate-data", "train", "evaluate", "stats", "report"):
        assert main([cmd, "--config", str(config), "--out", str(out)]) == 0, cmd


def test_pipeline_smoke(tmp_path):
    config = _write_config(tmp_path, configurations=["centralized"])
    out = tmp_path / "run"
    _pipeline(config, out)
    files = _snapshot(out)
    assert "cohort.csv" in files and "report.md" in files
    assert "predictions/vol_simple__centralized__seed0.csv" in files
    for table in ("errors_by_configuration", "phenotype_comparisons", "outcome_tests", "odds_ratios", "cohort_centers"):
        assert f"tables/{table}.csv" in files


def test_bundle_is_byte_identical(tmp_path):
    config = _write_config(tmp_path)
    _pipeline(config, tmp_path / "a")
    _pipeline(config, tmp_path / "b")
    assert _snapshot(tmp_path / "a") == _snapshot(tmp_path / "b")


def test_train_twice_same_seed(tmp_path):
    config = _write_config(tmp_path, configurations=["single_site"])
    out = tmp_path / "run"
    assert main(["train", "--config", str(config), "--out", str(out), "--seed", "3"]) == 0
    first = _snapshot(out / "predictions")
    assert main(["train", "--config", str(config), "--out", str(out), "--seed", "3"]) == 0
    assert _snapshot(out / "predictions") == first
    assert list(first) == ["vol_simple__single_site__seed3.csv"]


def test_malformed_config_exits_nonzero(tmp_path, capsys):
    config = _write_config(tmp_path, families=["cnn"])
    assert main(["train", "--config", str(config), "--out", str(tmp_path / "x")]) == 2
    assert "config.families[0]" in capsys.readouterr().err


def test_report_without_predictions_fails(tmp_path):
    config = _write_config(tmp_path)
    assert main(["report", "--config", str(config), "--out", str(tmp_path / "empty")]) == 2


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_tcp_processes_match_inprocess(tmp_path):
    cohort = {"generate": {"n_centers": 3, "subjects_per_center": [90, 50, 40], "n_radiomic_features": 8, "seed": 11}}
    config = _write_config(tmp_path, cohort=cohort, configurations=["federated"], timeout=60)
    local = tmp_path / "local"
    remote = tmp_path / "remote"
    assert main(["generate-data", "--config", str(config), "--out", str(local)]) == 0
    assert main(["train", "--config", str(config), "--out", str(local)]) == 0
    remote.mkdir()
    (remote / "cohort.csv").write_bytes((local / "cohort.csv").read_bytes())

    port = _free_port()
    base = [sys.executable, "-m", "fedbrainage.cli"]
    common = ["--config", str(config), "--out", str(remote)]
    server = subprocess.Popen(base + ["serve-server", *common, "--listen", f"127.0.0.1:{port}"])
    # every center, the reference one included, is a federation client
    clients = [
        subprocess.Popen(base + ["serve-client", *common, "--connect", f"127.0.0.1:{port}", "--center-id", str(c)])
        for c in (1, 2, 3)
    ]
    try:
        assert server.wait(timeout=120) == 0
        assert all(c.wait(timeout=60) == 0 for c in clients)
    finally:
        for p in [server, *clients]:
            if p.poll() is None:
                p.kill()
    for sub in ("predictions", "rounds"):
        assert _snapshot(remote / sub) == _snapshot(local / sub)
