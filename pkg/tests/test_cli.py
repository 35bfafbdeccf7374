import json

import numpy as np
import pandas as pd
import pytest

from app.main import main
from app.models import TrainConfig
from app.services.training.trainer import initial_params
from app.storage.checkpoint_store import load_params
from app.storage.corpus_store import load_corpus

SMALL_CORPUS = {"n_instances": 20, "n_languages": 3, "d_latent": 4, "d_audio": 6, "d_text": 6}


def _write(path, document) -> str:
    path.write_text(json.dumps(document) if not isinstance(document, str) else document)
    return str(path)


def _run(command, config, out_dir, *extra) -> int:
    argv = [command, "--out-dir", str(out_dir), *extra]
    if config is not None:
        argv += ["--config", config]
    return main(argv)


@pytest.fixture
def corpus_path(tmp_path):
    config = _write(tmp_path / "gen.json", {"corpus": SMALL_CORPUS, "output": "corpus.alnc"})
    assert _run("gen-data", config, tmp_path / "data") == 0
    return tmp_path / "data" / "corpus.alnc"


class TestGenData:
    def test_writes_corpus_and_manifest(self, corpus_path):
        corpus = load_corpus(corpus_path)
        assert (corpus.n_instances, corpus.n_languages) == (20, 3)
        manifest = json.loads((corpus_path.parent / "gen-data.manifest.json").read_text())
        assert manifest["command"] == "gen-data"
        assert manifest["outputs"] == [str(corpus_path)]

    def test_byte_identical_reruns(self, tmp_path):
        config = _write(tmp_path / "gen.json", {"corpus": SMALL_CORPUS})
        assert _run("gen-data", config, tmp_path / "a") == 0
        assert _run("gen-data", config, tmp_path / "b") == 0
        assert (tmp_path / "a" / "corpus.alnc").read_bytes() == (tmp_path / "b" / "corpus.alnc").read_bytes()

    def test_seed_override_changes_corpus(self, tmp_path):
        config = _write(tmp_path / "gen.json", {"corpus": SMALL_CORPUS})
        assert _run("gen-data", config, tmp_path / "a") == 0
        assert _run("gen-data", config, tmp_path / "b", "--seed", "7") == 0
        assert (tmp_path / "a" / "corpus.alnc").read_bytes() != (tmp_path / "b" / "corpus.alnc").read_bytes()

    @pytest.mark.parametrize("document", [{}, '{"corpus": ', {"corpus": {**SMALL_CORPUS, "n_languages": 0}}])
    def test_bad_config_exits_2(self, tmp_path, document):
        assert _run("gen-data", _write(tmp_path / "bad.json", document), tmp_path) == 2

    def test_missing_config_exits_2(self, tmp_path):
        assert _run("gen-data", None, tmp_path) == 2


class TestTrainAndEvaluate:
    def _train(self, tmp_path, corpus_path, out, **overrides) -> int:
        document = {"corpus_path": str(corpus_path), "encoder": {"d_embed": 4}, "epochs": 3, **overrides}
        return _run("train", _write(tmp_path / "train.json", document), out)

    def test_zero_epochs_saves_initial_weights(self, tmp_path, corpus_path):
        assert self._train(tmp_path, corpus_path, tmp_path / "run", epochs=0, seed=4) == 0
        cfg = TrainConfig(corpus_path=str(corpus_path), encoder={"d_embed": 4}, epochs=0, seed=4)
        expected = initial_params(load_corpus(corpus_path).subset("train"), cfg.run_config(), 4)
        np.testing.assert_array_equal(load_params(tmp_path / "run" / "params.alnp").flatten(), expected.flatten())
        assert pd.read_csv(tmp_path / "run" / "loss.csv").empty

    def test_loss_log_and_determinism(self, tmp_path, corpus_path):
        assert self._train(tmp_path, corpus_path, tmp_path / "a") == 0
        assert self._train(tmp_path, corpus_path, tmp_path / "b") == 0
        log = pd.read_csv(tmp_path / "a" / "loss.csv")
        assert list(log["epoch"]) == [0, 1, 2]
        assert (tmp_path / "a" / "params.alnp").read_bytes() == (tmp_path / "b" / "params.alnp").read_bytes()

    def test_evaluate(self, tmp_path, corpus_path):
        assert self._train(tmp_path, corpus_path, tmp_path / "run") == 0
        code = _run(
            "evaluate", None, tmp_path / "eval", "--checkpoint", str(tmp_path / "run" / "params.alnp"), "--corpus", str(corpus_path)
        )
        assert code == 0
        metrics = json.loads((tmp_path / "eval" / "metrics.json").read_text())
        assert metrics["languages"] == ["eng", "fra", "deu"]
        assert (tmp_path / "eval" / "metrics.csv").exists()

    def test_evaluate_dimension_mismatch(self, tmp_path, corpus_path):
        assert self._train(tmp_path, corpus_path, tmp_path / "run") == 0
        other = _write(tmp_path / "gen7.json", {"corpus": {**SMALL_CORPUS, "d_audio": 7}, "output": "other.alnc"})
        assert _run("gen-data", other, tmp_path / "data7") == 0
        code = _run(
            "evaluate",
            None,
            tmp_path / "eval",
            "--checkpoint",
            str(tmp_path / "run" / "params.alnp"),
            "--corpus",
            str(tmp_path / "data7" / "other.alnc"),
        )
        assert code == 3

    def test_evaluate_needs_inputs(self, tmp_path):
        assert _run("evaluate", None, tmp_path) == 2


VERIFY = {
    "corpus": {"n_instances": 6, "n_languages": 2, "d_latent": 4, "d_audio": 5, "d_text": 5},
    "encoder": {"d_embed": 4},
    "optimizer": {"kind": "sgd", "eta": 0.01},
    "bound": {"epochs": 2, "steps_per_epoch": 2, "lipschitz_samples": 4},
}


class TestTheoryCommands:
    def test_verify_bound_and_replay(self, tmp_path):
        assert _run("verify-bound", _write(tmp_path / "vb.json", VERIFY), tmp_path / "vb") == 0
        trace = tmp_path / "vb" / "bound_trace.jsonl"
        assert _run("verify-bound", None, tmp_path / "replay", "--replay", str(trace)) == 0

        rows = [json.loads(line) for line in trace.read_text().splitlines()]
        rows[0]["measured_error"] = rows[0]["bound_rhs"] * 10 + 1.0
        trace.write_text("".join(json.dumps(row) + "\n" for row in rows))
        assert _run("verify-bound", None, tmp_path / "replay", "--replay", str(trace)) == 4

    def test_verify_bound_single_language(self, tmp_path):
        document = {**VERIFY, "corpus": {**VERIFY["corpus"], "n_languages": 1}}
        assert _run("verify-bound", _write(tmp_path / "vb.json", document), tmp_path / "vb") == 0
        rows = [json.loads(line) for line in (tmp_path / "vb" / "bound_trace.jsonl").read_text().splitlines()]
        assert all(row["measured_error"] == 0.0 for row in rows)

    def test_verify_bound_rejects_adam(self, tmp_path):
        document = {**VERIFY, "optimizer": {"kind": "adam"}}
        assert _run("verify-bound", _write(tmp_path / "vb.json", document), tmp_path) == 2

    def test_adam_check(self, tmp_path):
        document = {
            "corpus": {"n_instances": 6, "n_languages": 3, "d_latent": 4, "d_audio": 5, "d_text": 5},
            "encoder": {"d_embed": 4},
            "steps": 2,
            "lipschitz_samples": 4,
        }
        assert _run("adam-check", _write(tmp_path / "ac.json", document), tmp_path / "ac") == 0
        report = json.loads((tmp_path / "ac" / "adam_check.json").read_text())
        assert report["passed"] and len(report["steps"]) == 2

    def test_grad_check(self, tmp_path):
        assert _run("grad-check", _write(tmp_path / "gc.json", {"seeds": [0, 1]}), tmp_path / "gc") == 0
        suite = json.loads((tmp_path / "gc" / "grad_check.json").read_text())
        assert len(suite["reports"]) == 6


class TestExperimentCommands:
    DOCUMENT = {"corpus": SMALL_CORPUS, "encoder": {"d_embed": 4}, "epochs": 2, "seeds": [0, 1]}

    def test_compare(self, tmp_path):
        assert _run("compare", _write(tmp_path / "cmp.json", self.DOCUMENT), tmp_path / "cmp") == 0
        summary = pd.read_csv(tmp_path / "cmp" / "summary.csv")
        assert set(summary["strategy"]) == {"mlclap", "cacl", "kcl"}
        curves = pd.read_csv(tmp_path / "cmp" / "loss_curves.csv")
        assert len(curves) == 3 * 2 * 2

    def test_single_language_ordering_assertion_fails(self, tmp_path):
        document = {**self.DOCUMENT, "corpus": {**SMALL_CORPUS, "n_languages": 1}}
        config = _write(tmp_path / "cmp.json", document)
        assert _run("compare", config, tmp_path / "cmp") == 0
        assert _run("compare", config, tmp_path / "cmp", "--assert-ordering") == 4

    def test_invalid_jobs(self, tmp_path):
        assert _run("compare", _write(tmp_path / "cmp.json", self.DOCUMENT), tmp_path, "--jobs", "0") == 2

    def test_overhead(self, tmp_path):
        document = {**self.DOCUMENT, "epochs": 1, "seeds": [0]}
        assert _run("overhead", _write(tmp_path / "oh.json", document), tmp_path / "oh") == 0
        rows = pd.read_csv(tmp_path / "oh" / "overhead.csv")
        assert dict(zip(rows["strategy"], rows["texts_per_epoch"])) == {"mlclap": 20, "cacl": 40, "kcl": 60}
