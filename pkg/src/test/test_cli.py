"""Tests for config loading and the command-line stages."""

from json import dumps, loads
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.cli.app import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from src.cli.settings import config_hash, load_config
from src.cli.stages import PIPELINE_ORDER, STAGES
from src.config import LOG_FORMAT, LOG_LEVEL
from src.dataio.feature_io import read_feature_matrix
from src.dataio.transcripts import generate_transcript, transcript_frame
from src.errors import ConfigurationError
from utils import artifact_manager
from utils.artifact_manager import ArtifactManager

TOY_CONFIG = Path(__file__).resolve().parents[2] / "configs" / "toy_pipeline.json"


def write_story(directory: Path, n_words: int, name: str = "tale") -> Path:
    path = directory / f"{name}.tsv"
    transcript_frame(generate_transcript(n_words, 20, seed=3)).to_csv(path, sep="\t", index=False)
    return path


def write_config(directory: Path, **sections) -> Path:
    config = {
        "seed": 0,
        "paths": {
            "transcripts": ["tale.tsv"],
            "model": "out/model.bin",
            "bold_dir": "out/bold",
            "output_dir": "out",
        },
        "training": {"steps": 5},
        "features": {"steps_m": 4},
    }
    config.update(sections)
    path = directory / "config.json"
    path.write_text(dumps(config), encoding="utf-8")
    return path


class TestLoadConfig:
    def test_paths_resolve_against_the_config_file(self, tmp_path):
        config = load_config(write_config(tmp_path))
        assert Path(config.paths.output_dir) == (tmp_path / "out").resolve()
        assert Path(config.paths.transcripts[0]) == (tmp_path / "tale.tsv").resolve()

    def test_overrides(self, tmp_path):
        config = load_config(
            write_config(tmp_path), ["training.steps=7", 'features.methods=["erasure"]', "stats.q=0.1"]
        )
        assert config.training.steps == 7
        assert config.features.methods == ["erasure"]
        assert config.stats.q == 0.1

    def test_hash_follows_the_content(self, tmp_path):
        path = write_config(tmp_path)
        assert config_hash(load_config(path)) == config_hash(load_config(path))
        assert config_hash(load_config(path)) != config_hash(load_config(path, ["seed=1"]))

    @pytest.mark.parametrize(
        "overrides", [["training"], ["encoder.n_folds=1"], ["features.methods=[\"shapley\"]"], ["seed.x=1"]]
    )
    def test_invalid_overrides(self, tmp_path, overrides):
        with pytest.raises(ConfigurationError):
            load_config(write_config(tmp_path), overrides)

    def test_missing_and_malformed_files(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "missing.json")
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigurationError):
            load_config(path)

    def test_toy_config_is_valid(self):
        config = load_config(TOY_CONFIG)
        assert config.synthetic.source == "layers"
        assert config.synthetic.spec.n_trs == 60


class TestStages:
    def test_train_then_erasure_features(self, tmp_path):
        write_story(tmp_path, 21)
        config = str(write_config(tmp_path))
        assert main(["train-lm", "--config", config]) == EXIT_OK
        assert (tmp_path / "out" / "model.bin").is_file()
        training = loads((tmp_path / "out" / "training.json").read_text())
        assert training["corpus_tokens"] >= 21

        assert main(["features", "--config", config, "--kind", "attribution", "--method", "erasure"]) == EXIT_OK
        features = read_feature_matrix(tmp_path / "out" / "features" / "tale" / "attribution-erasure.feat")
        assert features.shape == (1, 10)
        np.testing.assert_array_equal(features.word_indices, [10])

        manifest = loads((tmp_path / "out" / "manifests" / "features.json").read_text())
        assert manifest["stage"] == "features"
        assert manifest["artifacts"] == ["features/tale/attribution-erasure.feat"]
        assert manifest["config_hash"] == config_hash(load_config(config))

    def test_attribute_dump(self, tmp_path):
        write_story(tmp_path, 21)
        config = str(write_config(tmp_path))
        assert main(["train-lm", "--config", config]) == EXIT_OK
        assert main(["attribute", "--config", config, "--method", "grad_norm"]) == EXIT_OK
        frame = pd.read_csv(tmp_path / "out" / "attributions" / "tale.csv")
        assert list(frame.columns) == ["window_index", "token_index", "word_index", "method", "score"]
        assert sorted(frame["window_index"].unique()) == list(range(11))
        assert set(frame["method"]) == {"grad_norm"}
        assert (frame["score"] >= 0).all()
        for window, rows in frame.groupby("window_index"):
            assert rows["word_index"].min() == window
            assert rows["word_index"].max() == window + 9

    def test_missing_transcript_is_a_usage_error(self, tmp_path):
        assert main(["train-lm", "--config", str(write_config(tmp_path))]) == EXIT_USAGE

    def test_malformed_config(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("[1, 2", encoding="utf-8")
        assert main(["train-lm", "--config", str(path)]) == EXIT_USAGE

    def test_bad_arguments(self, tmp_path):
        config = str(write_config(tmp_path))
        assert main(["features", "--config", config, "--method", "shapley"]) == EXIT_USAGE
        assert main(["explode", "--config", config]) == EXIT_USAGE
        assert main(["train-lm"]) == EXIT_USAGE

    def test_too_short_transcript_is_a_runtime_error(self, tmp_path):
        write_story(tmp_path, 15)
        config = str(write_config(tmp_path))
        assert main(["train-lm", "--config", config]) == EXIT_OK
        assert main(["features", "--config", config, "--kind", "attribution", "--method", "grad_norm"]) == EXIT_RUNTIME
        assert not (tmp_path / "out" / "features").exists()
        assert not (tmp_path / "out" / "manifests" / "features.json").exists()

    def test_encode_before_synth(self, tmp_path):
        write_story(tmp_path, 21)
        assert main(["encode", "--config", str(write_config(tmp_path))]) == EXIT_USAGE

    def test_unexpected_error_is_a_runtime_error_and_removes_partial_outputs(self, tmp_path, monkeypatch):
        write_story(tmp_path, 21)
        config = str(write_config(tmp_path))

        def failing_stage(ctx):
            ctx.manager.write_text("ceiling.csv", "voxel_id\n0\n")
            raise ValueError("shape mismatch")

        monkeypatch.setitem(STAGES, "ceiling", failing_stage)
        assert main(["ceiling", "--config", config]) == EXIT_RUNTIME
        assert not (tmp_path / "out" / "ceiling.csv").exists()
        assert not (tmp_path / "out" / "manifests" / "ceiling.json").exists()


class TestArtifactManager:
    def test_cleanup_removes_written_and_tracked_files(self, tmp_path):
        manager = ArtifactManager(tmp_path)
        written = manager.write_json("a/summary.json", {"x": 1})
        tracked = tmp_path / "model.bin"
        tracked.write_bytes(b"\x00")
        manager.track(tracked)
        assert written.is_file()
        assert not (tmp_path / "a" / ".summary.json.tmp").exists()
        manager.cleanup()
        assert not written.exists()
        assert not tracked.exists()
        assert manager.written == []

    def test_logging_uses_the_environment_settings(self):
        assert artifact_manager.LOG_FORMAT == LOG_FORMAT
        assert artifact_manager.LOG_LEVEL == LOG_LEVEL
        assert not hasattr(artifact_manager, "FORMAT")


@pytest.mark.slow
class TestPipeline:
    def run(self, output: Path, command: str = "pipeline") -> int:
        overrides = [
            f"paths.output_dir={output}",
            f"paths.model={output / 'model.bin'}",
            f"paths.bold_dir={output / 'bold'}",
            'features.methods=["grad_norm", "grad_x_input", "erasure"]',
            "features.steps_m=4",
            "training.steps=50",
        ]
        argv = [command, "--config", str(TOY_CONFIG)]
        for override in overrides:
            argv += ["--override", override]
        return main(argv)

    def test_identical_runs_give_identical_outputs(self, tmp_path):
        assert self.run(tmp_path / "first") == EXIT_OK
        assert self.run(tmp_path / "second") == EXIT_OK
        compared = [
            "ceiling.csv",
            "significance_mask.csv",
            "scores/attribution-erasure.csv",
            "layers/layer_scores.csv",
        ]
        for name in compared:
            assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes(), name

        for stage in ("train-lm", "features", "synth", "encode", "ceiling", "stats", "layers"):
            assert (tmp_path / "first" / "manifests" / f"{stage}.json").is_file()
        comparison = pd.read_csv(tmp_path / "first" / "comparison.csv")
        assert set(comparison.columns) >= {"voxel_id", "friedman_stat", "winner"}
        alignment = loads((tmp_path / "first" / "layers" / "alignment.json").read_text())
        assert "pooled" in alignment

    def test_stages_run_one_by_one_match_a_pipeline_run(self, tmp_path):
        assert self.run(tmp_path / "whole") == EXIT_OK
        for stage in PIPELINE_ORDER:
            assert self.run(tmp_path / "staged", stage) == EXIT_OK, stage
        compared = [
            "model.bin",
            "features/toy_story/attribution-grad_norm.feat",
            "ceiling.csv",
            "significance_mask.csv",
            "scores/attribution-erasure.csv",
            "scores/conductance-all.csv",
            "layers/layer_scores.csv",
        ]
        for name in compared:
            assert (tmp_path / "whole" / name).read_bytes() == (tmp_path / "staged" / name).read_bytes(), name
