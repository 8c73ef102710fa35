"""
End-to-end jobs through the command-line entry point.
"""

import json

import pytest

from app import build_parser, main, spec_from_args
from corpus.conll import format_conll
from corpus.synthetic import make_synthetic_corpus
from errors import ArgumentError
from evaluation.metrics import EvalReport
from gti_orchestrator import (
    JobSpec,
    build_model,
    git_blob_hash,
    load_splits,
    resolve_tasks,
    run_gradcheck,
    summarize,
)
from training.checkpoint import load_checkpoint
from training.trainer import TrainConfig

TINY_FLAGS = ["--state-size", "8", "--state-sizes", "8", "--d-word", "8", "--d-char", "8", "--d-label", "8"]


@pytest.fixture
def data_files(tmp_path):
    corpus = make_synthetic_corpus(12, seed=4)
    train = tmp_path / "train.txt"
    train.write_text(format_conll(corpus, ["pos", "chunk", "ner"]), encoding="utf-8")
    tokens = tmp_path / "tokens.txt"
    tokens.write_text("".join("\n".join(s.tokens) + "\n\n" for s in corpus[:3]), encoding="utf-8")
    return {"train": train, "tokens": tokens, "corpus": corpus}


@pytest.fixture
def checkpoint(tmp_path, data_files):
    out = tmp_path / "run"
    code = main(["train", "--train", str(data_files["train"]), "--dev", str(data_files["train"]),
                 "--epochs", "2", "--T", "10", "--M", "1", "--out-dir", str(out)] + TINY_FLAGS)
    assert code == 0
    return out / "best.ckpt"


class TestArguments:

    def test_flags_map_onto_job_spec(self):
        args = build_parser().parse_args(
            ["train", "--data-format", "conll2000", "--main", "chunk", "--aux", "pos", "--epochs", "3"]
        )
        spec = spec_from_args(args)
        assert spec.model == {"main_task": "chunk", "aux_tasks": ["pos"]}
        assert spec.train == {"epoch_cap": 3}
        assert spec.data_format == "conll2000"

    def test_state_size_flag(self):
        args = build_parser().parse_args(["train", "--main", "ner", "--aux", "chunk,pos", "--state-size", "200"])
        spec = spec_from_args(args)
        assert spec.model["state_size"] == 200
        assert spec.model["aux_tasks"] == ["chunk", "pos"]

    def test_default_tasks_follow_data_format(self):
        assert resolve_tasks(JobSpec(command="train", data_format="conll2000")) == ("chunk", ["pos"])
        assert resolve_tasks(JobSpec(command="train")) == ("ner", ["chunk", "pos"])

    def test_unknown_task_rejected(self):
        with pytest.raises(ArgumentError):
            resolve_tasks(JobSpec(command="train", data_format="conll2000", model={"main_task": "ner"}))

    def test_conll2000_model_configuration(self, tmp_path):
        corpus = make_synthetic_corpus(6, seed=1)
        path = tmp_path / "chunks.txt"
        path.write_text(format_conll(corpus, ["pos", "chunk"]), encoding="utf-8")
        spec = JobSpec(command="train", data_format="conll2000", train_path=str(path),
                       model={"main_task": "chunk", "aux_tasks": ["pos"], "d_word": 8},
                       state_sizes=[8])
        model = build_model(spec, load_splits(spec, 1000), TrainConfig())
        assert model.config.main_task == "chunk"
        assert model.config.K == 1
        assert model.config.state_size == 8


class TestTrain:

    def test_writes_artifacts(self, checkpoint):
        out = checkpoint.parent
        assert checkpoint.is_file()
        epochs = [json.loads(line) for line in (out / "epochs.jsonl").read_text().splitlines()]
        assert [e["epoch"] for e in epochs] == [0, 1]
        assert all(e["dev_f1"] is not None for e in epochs)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["spec"]["command"] == "train"
        assert manifest["model_config"]["state_size"] == 8
        assert len(manifest["data_hashes"]) == 1
        assert (out / "gti.log").is_file()

    def test_synthetic_corpus_without_dev(self, tmp_path):
        out = tmp_path / "synthetic"
        code = main(["train", "--synthetic", "6", "--epochs", "1", "--T", "9", "--M", "1",
                     "--out-dir", str(out)] + TINY_FLAGS)
        assert code == 0
        assert (out / "best.ckpt").is_file()

    def test_missing_file_exit_code(self, tmp_path, capsys):
        code = main(["train", "--train", str(tmp_path / "nope.txt"), "--out-dir", str(tmp_path)])
        assert code == 2
        assert "ERROR DATA_NOT_FOUND" in capsys.readouterr().err

    def test_invalid_config_exit_code(self, data_files, tmp_path, capsys):
        code = main(["train", "--train", str(data_files["train"]), "--state-size", "64",
                     "--out-dir", str(tmp_path)])
        assert code == 2
        assert "ERROR BAD_ARGUMENT" in capsys.readouterr().err


class TestEvalAndPredict:

    def test_eval_report_re_parses(self, checkpoint, data_files, tmp_path, capsys):
        out = tmp_path / "eval"
        code = main(["eval", "--checkpoint", str(checkpoint), "--data", str(data_files["train"]),
                     "--out-dir", str(out)])
        assert code == 0
        text = (out / "eval_report.txt").read_text()
        report = EvalReport.from_text(text)
        assert report.task == "ner"
        assert report.to_text() == text
        assert (out / "eval_report.chunk.txt").is_file()
        assert "FB1" in capsys.readouterr().out

    def test_eval_defaults_to_the_checkpoint_layout(self, tmp_path):
        corpus = make_synthetic_corpus(8, seed=6)
        data = tmp_path / "chunks.txt"
        data.write_text(format_conll(corpus, ["pos", "chunk"]), encoding="utf-8")
        run = tmp_path / "run"
        code = main(["train", "--data-format", "conll2000", "--train", str(data), "--epochs", "1",
                     "--T", "9", "--M", "1", "--out-dir", str(run)] + TINY_FLAGS)
        assert code == 0
        assert load_checkpoint(run / "best.ckpt").config.data_format == "conll2000"

        out = tmp_path / "eval"
        code = main(["eval", "--checkpoint", str(run / "best.ckpt"), "--data", str(data), "--out-dir", str(out)])
        assert code == 0
        assert EvalReport.from_text((out / "eval_report.txt").read_text()).task == "chunk"

    def test_eval_with_unknown_tags(self, checkpoint, tmp_path, capsys):
        bad = tmp_path / "bad.txt"
        bad.write_text("Zorro NNP B-NP B-HERO\n\n", encoding="utf-8")
        code = main(["eval", "--checkpoint", str(checkpoint), "--data", str(bad), "--out-dir", str(tmp_path)])
        assert code == 4
        assert "ERROR CONFIG_MISMATCH" in capsys.readouterr().err

    def test_predict_columns_and_determinism(self, checkpoint, data_files, tmp_path):
        outputs = []
        for run in ("a", "b"):
            out = tmp_path / run
            code = main(["predict", "--checkpoint", str(checkpoint), "--input", str(data_files["tokens"]),
                         "--out-dir", str(out)])
            assert code == 0
            outputs.append((out / "predictions.conll").read_text())
        assert outputs[0] == outputs[1]

        sentences = [block.splitlines() for block in outputs[0].strip().split("\n\n")]
        corpus = data_files["corpus"][:3]
        assert len(sentences) == 3
        for lines, raw in zip(sentences, corpus):
            assert [line.split()[0] for line in lines] == raw.tokens
            # token + K aux columns + main column
            assert all(len(line.split()) == 1 + 2 + 1 for line in lines)

    def test_predict_respects_thread_cap(self, checkpoint, data_files, tmp_path, monkeypatch):
        monkeypatch.setenv("GTI_THREADS", "2")
        code = main(["predict", "--checkpoint", str(checkpoint), "--input", str(data_files["tokens"]),
                     "--out-dir", str(tmp_path)])
        assert code == 0


class TestGradcheck:

    def test_tiny_gti_model_passes(self, tmp_path):
        code = main(["gradcheck", "--out-dir", str(tmp_path)])
        assert code == 0
        assert "gradcheck: PASS" in (tmp_path / "gradcheck.txt").read_text()
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["spec"]["command"] == "gradcheck"
        assert manifest["model_config"]["state_size"] == 8

    def test_corrupted_rule_fails_naming_the_op(self, tmp_path, capsys):
        code = main(["gradcheck", "--fault", "matvec", "--out-dir", str(tmp_path)])
        assert code == 3
        err = capsys.readouterr().err
        assert "ERROR NUMERICAL_FAILURE" in err
        assert "matvec" in err

    def test_vanilla_reports_zero_gil_gradients(self, tmp_path):
        report = run_gradcheck(JobSpec(command="gradcheck", model={"variant": "VANILLA"}, out_dir=str(tmp_path)))
        assert report.passed
        gil = [name for name in report.per_param if name.startswith("gil.")]
        assert gil
        assert set(gil) <= set(report.zero_grad_params)


class TestExperiments:

    def test_summarize(self):
        stats = summarize([0.9, 0.8, 1.0])
        assert stats["min"] == 0.8 and stats["max"] == 1.0
        assert stats["mean"] == pytest.approx(0.9)
        assert stats["std"] == pytest.approx(0.1)

    def test_git_blob_hash(self, tmp_path):
        path = tmp_path / "hello.txt"
        path.write_bytes(b"hello\n")
        assert git_blob_hash(path) == "ce013625030ba8dba906f756967f9e9ca394464a"

    def test_ablation_table_shape(self, tmp_path, capsys):
        out = tmp_path / "ablate"
        code = main(["ablate", "--synthetic", "4", "--epochs", "1", "--T", "9", "--M", "1",
                     "--seeds", "1,2", "--out-dir", str(out)] + TINY_FLAGS)
        assert code == 0
        table = (out / "ablation.txt").read_text()
        rows = table.splitlines()[3:]
        assert [row.split()[0] for row in rows] == ["SINGLE1", "SINGLE2", "VANILLA", "PIPELINE", "TI", "GTI"]
        assert "seeds (2): 1, 2" in table
        data = json.loads((out / "ablation.json").read_text())
        assert set(data["rows"]["GTI"]) == {"min", "mean", "std", "max"}

    def test_sweep_rows_per_state_size(self, tmp_path):
        out = tmp_path / "sweep"
        code = main(["sweep", "--synthetic", "4", "--epochs", "1", "--T", "9", "--M", "1",
                     "--seeds", "1", "--state-sizes", "4,8", "--d-word", "8", "--d-char", "8",
                     "--d-label", "8", "--out-dir", str(out)])
        assert code == 0
        data = json.loads((out / "sweep.json").read_text())
        assert list(data["rows"]) == ["GTI d_h=4", "GTI d_h=8"]
