"""Command-line tests: batch subcommands end-to-end and the service client."""

import json
import socket
import threading
import time

import httpx
import pytest

from evodetect.cli import main
from evodetect.data_io import load_csv
from evodetect.service import ServiceConfig, create_app

SMALL_SYNTH = {
    "d": 8,
    "informative": [[1, [0, 1], [0.5, 0.5]], [2, [2, 3], [0.5, 0.5]], [3, [4, 5], [0.5, 0.5]]],
    "anomaly_rate": 0.3,
    "class_mix": [0.4, 0.3, 0.3],
    "noise_sigma": 0.08,
    "seed": 5,
    "class_names": ["normal", "memory", "cpu", "disk"],
}


def write_run_config(tmp_path, **overrides):
    cfg = {"model": "mcl21ls", "epoch_size": 60, "epochs": 3, "seed": 0, "synth": SMALL_SYNTH}
    cfg.update(overrides)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return path


def read_stdout(capsys):
    return json.loads(capsys.readouterr().out)


def read_stderr(capsys):
    return json.loads(capsys.readouterr().err)


class TestBatchCommands:
    def test_replay_prints_summary_and_writes_artifacts(self, tmp_path, capsys):
        cfg = write_run_config(tmp_path)
        out = tmp_path / "run"
        rc = main(["replay", "--config", str(cfg), "--out", str(out)])
        assert rc == 0
        summary = read_stdout(capsys)
        assert summary["model"] == "mcl21ls"
        assert summary["epochs"] == 3
        assert 0 < summary["labeled_fraction_cumulative"] <= 1
        for name in ("manifest.json", "reports.jsonl", "summary.json", "weights.txt"):
            assert (out / name).exists()

    def test_replay_flag_overrides_reach_the_manifest(self, tmp_path, capsys):
        cfg = write_run_config(tmp_path)
        out = tmp_path / "run"
        rc = main([
            "replay", "--config", str(cfg), "--out", str(out),
            "--epochs", "2", "--seed", "9", "--no-smote",
        ])
        assert rc == 0
        assert read_stdout(capsys)["epochs"] == 2
        stored = json.loads((out / "manifest.json").read_text())["config"]
        assert stored["epochs"] == 2
        assert stored["seed"] == 9
        assert stored["smote"] is False

    def test_replay_without_config_uses_default_synth(self, tmp_path, capsys):
        out = tmp_path / "run"
        rc = main(["replay", "--out", str(out), "--epochs", "2", "--epoch-size", "50"])
        assert rc == 0
        assert read_stdout(capsys)["epochs"] == 2
        stored = json.loads((out / "manifest.json").read_text())["config"]
        assert stored["synth"]["d"] == 20

    def test_ablate_axis_subset(self, tmp_path, capsys):
        cfg = write_run_config(tmp_path, epochs=2)
        out = tmp_path / "grid"
        rc = main(["ablate", "--config", str(cfg), "--out", str(out), "--axes", "smote"])
        assert rc == 0
        rows = read_stdout(capsys)
        assert len(rows) == 2
        assert {r["smote"] for r in rows} == {True, False}
        assert (out / "ablation.csv").exists()

    def test_ablate_unknown_axis_fails_cleanly(self, tmp_path, capsys):
        cfg = write_run_config(tmp_path)
        rc = main(["ablate", "--config", str(cfg), "--axes", "bogus"])
        assert rc == 1
        assert read_stderr(capsys)["error"]["code"] == "config_invalid"

    def test_sweep_writes_rankings(self, tmp_path, capsys):
        cfg = write_run_config(tmp_path, epochs=2)
        out = tmp_path / "sweep"
        rc = main([
            "sweep", "--config", str(cfg), "--out", str(out),
            "--lambdas", "0.01,10", "--top-k", "3",
        ])
        assert rc == 0
        result = read_stdout(capsys)
        assert [cell["lambda"] for cell in result["cells"]] == [0.01, 10.0]
        assert all(
            cell["ranking"] is None or len(cell["ranking"]) <= 3
            for cell in result["cells"]
        )
        assert (out / "ranking_lambda_0.01.csv").exists()
        assert (out / "ranking_lambda_10.csv").exists()

    def test_synth_gen_writes_loadable_csv(self, tmp_path, capsys):
        out = tmp_path / "stream.csv"
        rc = main([
            "synth-gen", "--out", str(out), "--seed", "3",
            "--epochs", "2", "--epoch-size", "25", "--d", "8",
        ])
        assert rc == 0
        assert read_stdout(capsys)["records"] == 50
        ds = load_csv(out, class_names=["normal", "memory", "cpu", "network", "disk"])
        assert len(ds.batch) == 50
        assert len(ds.attribute_names) == 8
        assert ds.batch.labels is not None

    def test_synth_gen_rejects_impossible_dimension(self, tmp_path, capsys):
        rc = main(["synth-gen", "--out", str(tmp_path / "s.csv"), "--d", "6"])
        assert rc == 1
        assert read_stderr(capsys)["error"]["code"] == "runtime_error"

    def test_unreadable_config(self, tmp_path, capsys):
        rc = main(["replay", "--config", str(tmp_path / "nope.json")])
        assert rc == 1
        assert read_stderr(capsys)["error"]["code"] == "config_unreadable"

    def test_malformed_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        rc = main(["replay", "--config", str(bad)])
        assert rc == 1
        assert read_stderr(capsys)["error"]["code"] == "config_invalid"

    def test_missing_input_csv_is_a_runtime_error(self, tmp_path, capsys):
        cfg = write_run_config(tmp_path, synth=None, input_csv=str(tmp_path / "absent.csv"))
        rc = main(["replay", "--config", str(cfg)])
        assert rc == 1
        assert read_stderr(capsys)["error"]["code"] == "runtime_error"


class TestServeCommand:
    def test_serve_builds_app_from_flags(self, tmp_path, monkeypatch, capsys):
        import uvicorn

        captured = {}

        def fake_run(app, host, port):
            captured.update(app=app, host=host, port=port)

        monkeypatch.setattr(uvicorn, "run", fake_run)
        monkeypatch.chdir(tmp_path)  # keep the default event log out of the repo
        rc = main([
            "serve", "--mode", "live", "--model", "mcl21ls", "--seed", "3",
            "--epoch-size", "20", "--attribute-names", "a0,a1,a2",
            "--class-names", "normal,memory,cpu", "--port", "9100",
        ])
        assert rc == 0
        assert captured["port"] == 9100 and captured["host"] == "127.0.0.1"
        core = captured["app"].state.core
        assert core.cfg.epoch_size == 20
        assert core.attribute_names == ("a0", "a1", "a2")
        core.close()

    def test_serve_rejects_bad_config(self, tmp_path, capsys):
        rc = main(["serve", "--mode", "live"])  # live mode needs attribute names
        assert rc == 1
        assert read_stderr(capsys)["error"]["code"] == "config_invalid"


@pytest.fixture(scope="module")
def live_server(tmp_path_factory):
    """A real uvicorn server on an ephemeral port, shared by client tests."""
    import uvicorn

    tmp = tmp_path_factory.mktemp("server")
    cfg = ServiceConfig(
        mode="live", model="mcl21ls", seed=7, epoch_size=10,
        class_names=("normal", "memory", "cpu"),
        attribute_names=tuple(f"a{i}" for i in range(4)),
        bootstrap_fraction=0.3,
    )
    app = create_app(cfg, log_path=tmp / "events.jsonl")
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("server did not start")
        time.sleep(0.02)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


class TestClientCommands:
    def seed_epoch(self, url):
        """Push one epoch of records straight into the service."""
        import numpy as np

        rng = np.random.default_rng(0)
        records = [
            {"id": f"c{i}", "values": [float(v) for v in rng.uniform(0, 1, 4)]}
            for i in range(10)
        ]
        httpx.post(f"{url}/v1/ingest", json={"records": records}, timeout=30).raise_for_status()

    def test_full_review_workflow(self, live_server, capsys):
        url = live_server
        assert main(["status", "--url", url]) == 0
        assert read_stdout(capsys)["mode"] == "live"

        self.seed_epoch(url)
        assert main(["queue-ls", "--url", url, "--status", "pending"]) == 0
        queue = read_stdout(capsys)
        assert queue["total"] >= 3
        first = queue["items"][0]["record_id"]

        assert main(["label", "--url", url, "--record-id", first, "--class-name", "memory"]) == 0
        assert read_stdout(capsys)["status"] == "verified"

        # a duplicate verdict surfaces the service's conflict code
        rc = main(["label", "--url", url, "--record-id", first, "--class-name", "cpu"])
        assert rc == 1
        assert read_stderr(capsys)["error"]["code"] == "duplicate_verdict"

        flagged = {it["record_id"] for it in queue["items"]} | {first}
        normal_id = next(f"c{i}" for i in range(10) if f"c{i}" not in flagged)
        assert main(["missed", "--url", url, "--record-id", normal_id, "--class-name", "cpu"]) == 0
        assert read_stdout(capsys)["status"] == "queued"

        for item in queue["items"][1:]:
            assert main([
                "label", "--url", url,
                "--record-id", item["record_id"], "--class-name", "memory",
            ]) == 0
            capsys.readouterr()
        assert main(["metrics", "--url", url]) == 0
        metrics = read_stdout(capsys)
        assert metrics["total"] == 1
        assert metrics["reports"][0]["missed"] == 1

    def test_unreachable_service(self, capsys):
        rc = main(["status", "--url", "http://127.0.0.1:9"])
        assert rc == 1
        assert read_stderr(capsys)["error"]["code"] == "service_unreachable"
