import json

import numpy as np
import pytest

from depgat.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("sim")
    code = main(["simulate", "--preset", "p5", "--n-train", "600", "--n-valid", "200",
                 "--n-test", "200", "--seed", "11", "--out", str(path)])
    assert code == 0
    return path


TRAIN_FLAGS = ["--epochs", "3", "--pretrain-epochs", "1", "--batch-size", "64",
               "--task-h", "16", "--struct-h", "8", "--d-pos", "4", "--seed", "11"]


@pytest.fixture(scope="module")
def run_dir(sim_dir, tmp_path_factory):
    path = tmp_path_factory.mktemp("run")
    code = main(["train", "--data", str(sim_dir / "data.csv"),
                 "--sidecar", str(sim_dir / "data.json"),
                 "--out", str(path)] + TRAIN_FLAGS)
    assert code == 0
    return path


class TestSimulate:
    def test_outputs_exist_with_truth(self, sim_dir):
        assert (sim_dir / "data.csv").exists()
        sidecar = json.loads((sim_dir / "data.json").read_text())
        assert "precisions" in sidecar["extras"]
        assert len(sidecar["extras"]["precisions"]["true_graph_a"]) == 5

    def test_explicit_params(self, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "simulate", "--p", "4", "--p-d", "0.5",
                               "--p-i", "0.3", "--n-train", "100", "--n-valid", "20",
                               "--n-test", "20", "--seed", "3", "--out", str(tmp_path))
        assert code == 0
        summary = json.loads(out)
        assert summary["features"] == 4
        assert summary["counts"]["train"] == 100


class TestTrain:
    def test_artifacts(self, run_dir):
        for name in ("checkpoint.json", "metrics.json", "history.csv", "valid_history.csv"):
            assert (run_dir / name).exists(), name
        figures = list((run_dir / "figures").glob("*.png"))
        assert len(figures) >= 3

    def test_metrics_payload(self, run_dir):
        payload = json.loads((run_dir / "metrics.json").read_text())
        metrics = {r["metric"] for r in payload["reports"]}
        assert {"auc", "graph_auc"} <= metrics
        assert payload["hyperparams"]["epochs"] == 3

    def test_stdout_is_metrics_json(self, sim_dir, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "train", "--data", str(sim_dir / "data.csv"),
                               "--sidecar", str(sim_dir / "data.json"),
                               "--out", str(tmp_path), *TRAIN_FLAGS)
        assert code == 0
        payload = json.loads(out)
        assert payload["reports"]

    def test_identical_runs_identical_metric_bytes(self, sim_dir, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert main(["train", "--data", str(sim_dir / "data.csv"),
                         "--sidecar", str(sim_dir / "data.json"),
                         "--out", str(out)] + TRAIN_FLAGS) == 0
        assert (out_a / "metrics.json").read_bytes() == (out_b / "metrics.json").read_bytes()

    def test_config_file_with_flag_override(self, sim_dir, tmp_path, capsys):
        config = {"data": str(sim_dir / "data.csv"), "sidecar": str(sim_dir / "data.json"),
                  "out": str(tmp_path / "cfg_run"),
                  "hyperparams": {"epochs": 1, "pretrain_epochs": 0, "batch_size": 64,
                                  "task_H": 16, "struct_H": 8, "d_pos": 4, "seed": 2}}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(config))
        code, out, _ = run_cli(capsys, "train", "--config", str(cfg_path), "--epochs", "2")
        assert code == 0
        assert json.loads(out)["hyperparams"]["epochs"] == 2

    def test_schema_path_with_split_counts(self, sim_dir, tmp_path, capsys):
        schema = {"columns": [{"name": f"x{i}", "kind": "real"} for i in range(5)]
                  + [{"name": "target", "kind": "target"}],
                  "task": "classification"}
        schema_path = tmp_path / "schema.json"
        schema_path.write_text(json.dumps(schema))
        code, out, _ = run_cli(capsys, "train", "--data", str(sim_dir / "data.csv"),
                               "--schema", str(schema_path),
                               "--split-counts", "800,100,100", "--no-standardize",
                               "--out", str(tmp_path / "run"), *TRAIN_FLAGS)
        assert code == 0
        assert json.loads(out)["reports"]

    def test_config_standardize_respected(self, sim_dir, tmp_path, capsys):
        schema = {"columns": [{"name": f"x{i}", "kind": "real"} for i in range(5)]
                  + [{"name": "target", "kind": "target"}],
                  "task": "classification"}
        (tmp_path / "schema.json").write_text(json.dumps(schema))
        config = {"data": str(sim_dir / "data.csv"), "schema": str(tmp_path / "schema.json"),
                  "standardize": False, "split_counts": "800,100,100",
                  "out": str(tmp_path / "run"),
                  "hyperparams": {"epochs": 1, "pretrain_epochs": 0, "batch_size": 64,
                                  "task_H": 16, "struct_H": 8, "d_pos": 4}}
        (tmp_path / "cfg.json").write_text(json.dumps(config))
        code, _, _ = run_cli(capsys, "train", "--config", str(tmp_path / "cfg.json"))
        assert code == 0
        ckpt = json.loads((tmp_path / "run" / "checkpoint.json").read_text())
        norm = ckpt["extra"]["dataset_meta"]["standardization"]
        assert np.allclose(norm["mean"], 0.0) and np.allclose(norm["std"], 1.0)

    def test_seed_sweep_aggregates(self, sim_dir, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "train", "--data", str(sim_dir / "data.csv"),
                               "--sidecar", str(sim_dir / "data.json"),
                               "--out", str(tmp_path), "--seeds", "2", *TRAIN_FLAGS)
        assert code == 0
        payload = json.loads(out)
        assert (tmp_path / "seed_11").is_dir() and (tmp_path / "seed_12").is_dir()
        auc = next(a for a in payload["aggregates"]
                   if a["metric"] == "auc" and a["split"] == "test")
        assert auc["n_seeds"] == 2
        assert auc["std"] is not None


class TestEval:
    def test_sidecar_eval(self, sim_dir, run_dir, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "eval",
                               "--checkpoint", str(run_dir / "checkpoint.json"),
                               "--data", str(sim_dir / "data.csv"),
                               "--sidecar", str(sim_dir / "data.json"),
                               "--out", str(tmp_path))
        assert code == 0
        payload = json.loads(out)
        metrics = {r["metric"] for r in payload["reports"]}
        assert {"auc", "graph_auc"} <= metrics

    def test_schema_eval(self, sim_dir, run_dir, tmp_path, capsys):
        schema = {"columns": [{"name": f"x{i}", "kind": "real"} for i in range(5)]
                  + [{"name": "target", "kind": "target"}],
                  "task": "classification"}
        schema_path = tmp_path / "schema.json"
        schema_path.write_text(json.dumps(schema))
        code, out, _ = run_cli(capsys, "eval",
                               "--checkpoint", str(run_dir / "checkpoint.json"),
                               "--data", str(sim_dir / "data.csv"),
                               "--schema", str(schema_path),
                               "--split", "all", "--out", str(tmp_path))
        assert code == 0
        payload = json.loads(out)
        assert payload["reports"][0]["split"] == "all"


class TestExportGraph:
    def test_csv_and_svg(self, run_dir, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "export-graph",
                               "--checkpoint", str(run_dir / "checkpoint.json"),
                               "--out", str(tmp_path))
        assert code == 0
        written = json.loads(out)["written"]
        assert len(written) == 2
        matrix_lines = (tmp_path / "graph.csv").read_text().strip().splitlines()
        assert matrix_lines[0] == "name,x0,x1,x2,x3,x4"
        svg = (tmp_path / "graph.svg").read_text()
        assert svg.count("<rect") == 25

    def test_exported_matrix_is_symmetric_by_default(self, run_dir, tmp_path):
        assert main(["export-graph", "--checkpoint", str(run_dir / "checkpoint.json"),
                     "--out", str(tmp_path)]) == 0
        from depgat.report import read_matrix_csv
        matrix, _ = read_matrix_csv(tmp_path / "graph.csv")
        assert np.array_equal(matrix, matrix.T)


class TestBaseline:
    def test_qda(self, sim_dir, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "baseline", "qda",
                               "--data", str(sim_dir / "data.csv"),
                               "--sidecar", str(sim_dir / "data.json"),
                               "--out", str(tmp_path))
        assert code == 0
        payload = json.loads(out)
        assert payload["baseline"] == "qda"
        assert {r["split"] for r in payload["reports"]} == {"valid", "test"}

    def test_mlp(self, sim_dir, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "baseline", "mlp",
                               "--data", str(sim_dir / "data.csv"),
                               "--sidecar", str(sim_dir / "data.json"),
                               "--epochs", "3", "--hidden", "8", "--seed", "0",
                               "--out", str(tmp_path))
        assert code == 0
        payload = json.loads(out)
        assert payload["baseline"] == "mlp"


class TestErrors:
    def test_missing_schema_is_exit_one(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "train", "--data", "nope.csv",
                               "--out", str(tmp_path))
        assert code == 1
        assert "error:" in err

    def test_bad_checkpoint_is_exit_one(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{}")
        code, _, err = run_cli(capsys, "eval", "--checkpoint", str(bad),
                               "--data", "x.csv", "--out", str(tmp_path))
        assert code == 1
        assert "error:" in err


def test_env_var_sets_default_out(sim_dir, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("DEPGAT_OUT", str(tmp_path / "from_env"))
    code, _, _ = run_cli(capsys, "baseline", "qda",
                         "--data", str(sim_dir / "data.csv"),
                         "--sidecar", str(sim_dir / "data.json"))
    assert code == 0
    assert (tmp_path / "from_env" / "metrics.json").exists()
