"""End-to-end tests of the command-line frontend."""

import json

import pytest

from aesgraph.cli import main
from aesgraph.metrics import EvalReport


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A synthetic dataset plus a short training run, shared across tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "ds"
    run = root / "run"
    assert main(["synth", "--seed", "7", "--n", "24", "--profile", "desk",
                 "--out", str(data)]) == 0
    assert main(["train", "--data", str(data), "--out", str(run),
                 "--arch", "graph", "--steps", "12", "--batch", "8",
                 "--lr", "1e-3", "--no-lr-decay", "--seed", "0"]) == 0
    return {"root": root, "data": data, "run": run}


class TestSynth:
    def test_writes_dataset(self, workspace):
        assert (workspace["data"] / "manifest.jsonl").exists()
        assert (workspace["data"] / "features.bin").exists()

    def test_reproducible_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["synth", "--seed", "3", "--n", "6", "--profile", "desk",
                         "--out", str(out)]) == 0
        assert (a / "manifest.jsonl").read_bytes() == (b / "manifest.jsonl").read_bytes()
        assert (a / "features.bin").read_bytes() == (b / "features.bin").read_bytes()

    def test_plant_flags(self, tmp_path):
        out = tmp_path / "p"
        assert main(["synth", "--seed", "1", "--n", "8", "--profile", "desk",
                     "--plant-label", "blurry", "--plant-kind", "attribute",
                     "--plant-corr", "-0.5", "--out", str(out)]) == 0


class TestTrain:
    def test_outputs_exist(self, workspace):
        run = workspace["run"]
        assert (run / "best.ckpt").exists()
        assert (run / "final.ckpt").exists()
        assert (run / "train_log.jsonl").exists()
        assert (run / "eval_reports.jsonl").exists()

    def test_log_has_one_line_per_step(self, workspace):
        lines = (workspace["run"] / "train_log.jsonl").read_text().splitlines()
        assert len(lines) == 12
        parsed = [json.loads(l) for l in lines]
        assert [p["step"] for p in parsed] == list(range(1, 13))

    def test_reproducible_run(self, workspace, tmp_path):
        other = tmp_path / "run2"
        assert main(["train", "--data", str(workspace["data"]), "--out", str(other),
                     "--arch", "graph", "--steps", "12", "--batch", "8",
                     "--lr", "1e-3", "--no-lr-decay", "--seed", "0"]) == 0
        assert (other / "best.ckpt").read_bytes() == (workspace["run"] / "best.ckpt").read_bytes()
        assert (other / "train_log.jsonl").read_bytes() == \
               (workspace["run"] / "train_log.jsonl").read_bytes()


class TestEval:
    def test_report_file(self, workspace, tmp_path, capsys):
        report_path = tmp_path / "report.json"
        assert main(["eval", "--data", str(workspace["data"]),
                     "--ckpt", str(workspace["run"] / "best.ckpt"),
                     "--out", str(report_path)]) == 0
        report = EvalReport.from_text(report_path.read_text())
        assert 0.0 <= report.mean_emd <= 1.0
        assert report_path.read_text() == capsys.readouterr().out


class TestInfer:
    def test_per_image_outputs(self, workspace, tmp_path):
        out = tmp_path / "preds.jsonl"
        assert main(["infer", "--data", str(workspace["data"]),
                     "--ckpt", str(workspace["run"] / "best.ckpt"),
                     "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 24
        row = json.loads(lines[0])
        assert set(row) == {"id", "mean", "std", "distribution"}
        assert sum(row["distribution"]) == pytest.approx(1.0, abs=1e-9)
        assert 1.0 <= row["mean"] <= 10.0


class TestExportAndInterpret:
    def test_full_chain(self, workspace, tmp_path):
        log_path = tmp_path / "attn.jsonl"
        assert main(["export-attn", "--data", str(workspace["data"]),
                     "--ckpt", str(workspace["run"] / "best.ckpt"),
                     "--out", str(log_path)]) == 0
        report_dir = tmp_path / "interp"
        assert main(["interpret", "--log", str(log_path), "--out", str(report_dir),
                     "--top-k", "50", "--margin", "0.04"]) == 0
        assert (report_dir / "subjects.txt").exists()
        assert (report_dir / "attention_corr_category.tsv").exists()
        assert (report_dir / "attention_corr_attribute.tsv").exists()
        assert (report_dir / "pair_corr_category.tsv").exists()
        assert (report_dir / "summary.json").exists()

    def test_interpret_plots(self, workspace, tmp_path):
        log_path = tmp_path / "attn.jsonl"
        main(["export-attn", "--data", str(workspace["data"]),
              "--ckpt", str(workspace["run"] / "best.ckpt"), "--out", str(log_path)])
        report_dir = tmp_path / "interp-plots"
        assert main(["interpret", "--log", str(log_path), "--out", str(report_dir),
                     "--plots"]) == 0
        assert (report_dir / "subject_gap.png").exists()
        assert (report_dir / "attention_corr_category.png").exists()

    def test_baseline_checkpoint_cannot_export(self, workspace, tmp_path):
        run = tmp_path / "baseline-run"
        assert main(["train", "--data", str(workspace["data"]), "--out", str(run),
                     "--arch", "baseline", "--steps", "4", "--batch", "8",
                     "--lr", "1e-3", "--no-lr-decay"]) == 0
        code = main(["export-attn", "--data", str(workspace["data"]),
                     "--ckpt", str(run / "best.ckpt"), "--out", str(tmp_path / "x.jsonl")])
        assert code == 1


class TestErrorHandling:
    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for cmd in ("synth", "train", "eval", "infer", "export-attn", "interpret"):
            assert cmd in out

    def test_subcommand_help_documents_flags(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for flag in ("--data", "--out", "--arch", "--epochs", "--steps", "--batch",
                     "--lr", "--seed", "--eval-split", "--relations"):
            assert flag in out

    def test_unknown_flag_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--frobnicate", "1", "--n", "2", "--out", "x"])
        assert exc.value.code == 2

    def test_missing_dataset_exits_one(self, tmp_path, capsys):
        code = main(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_relations_exits_one(self, workspace, tmp_path, capsys):
        code = main(["train", "--data", str(workspace["data"]), "--out", str(tmp_path / "o"),
                     "--relations", "visual,psychic"])
        assert code == 1
        assert "psychic" in capsys.readouterr().err
