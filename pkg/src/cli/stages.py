"""
Pipeline stages. Each stage reads the artifacts of earlier stages from the
output directory (or computes what is missing), writes its own artifacts
through the run's ArtifactManager and returns the written paths.
"""

from dataclasses import dataclass
from logging import getLogger, basicConfig
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.attribution.methods import attribute
from src.config import LOG_FORMAT, LOG_LEVEL, WORKERS
from src.dataio.bold import BoldDataset, read_bold_dataset, write_bold_dataset
from src.dataio.feature_io import read_feature_matrix, read_score_map, write_feature_matrix, write_score_map
from src.dataio.labels import labels_per_voxel, read_pos_tags, read_roi_labels
from src.dataio.synthetic import generate_layer_groups, generate_synthetic
from src.dataio.transcripts import parse_transcript
from src.encoder.scoring import brain_score_cv
from src.encoder.types import BrainScoreMap
from src.errors import ConfigurationError, InputError
from src.features.builders import (
    activation_features,
    attention_features,
    attribution_features,
    conductance_features,
    word_layer_importance,
)
from src.features.types import FeatureMatrix, StoryTranscript
from src.features.windows import build_windows, window_tokens
from src.lm.model import TinyLM, build_model
from src.lm.storage import load_model, save_model
from src.lm.tokenizer import WordTokenizer
from src.lm.training import corpus_loss, train
from src.schemas.lm_schema import ModelConfig, TargetSpec
from src.schemas.pipeline_schema import PipelineConfig
from src.stats.ceiling import isc_noise_ceiling
from src.stats.compare import compare_feature_spaces, voxel_significance
from src.stats.grouping import group_mean, pos_grouped_importance, roi_ceiling_summary
from src.stats.layers import importance_alignment, layer_distributions, layer_preference
from utils.artifact_manager import ArtifactManager

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)

CEILING_FILE = "ceiling.csv"


@dataclass
class RunContext:
    config: PipelineConfig
    manager: ArtifactManager

    @property
    def output(self) -> Path:
        return self.manager.output_dir


def require_path(path: Optional[str], what: str) -> Path:
    if path is None or not Path(path).exists():
        raise ConfigurationError(f"Missing {what}: {path}")
    return Path(path)


def file_label(features_label: str) -> str:
    return features_label.replace(":", "-")


def load_transcripts(ctx: RunContext) -> List[StoryTranscript]:
    return [parse_transcript(require_path(p, "transcript")) for p in ctx.config.paths.transcripts]


def load_lm(ctx: RunContext) -> TinyLM:
    return load_model(require_path(ctx.config.paths.model, "model file"))


def load_dataset(ctx: RunContext) -> BoldDataset:
    return read_bold_dataset(require_path(ctx.config.paths.bold_dir, "BOLD dataset directory"))


def story_transcript(transcripts: List[StoryTranscript], story_id: str) -> StoryTranscript:
    for transcript in transcripts:
        if transcript.story_id == story_id:
            return transcript
    raise InputError(f"No transcript for story '{story_id}'")


def run_train_lm(ctx: RunContext) -> List[Path]:
    """Build the vocabulary from every transcript, train the model, save it."""
    config = ctx.config
    transcripts = load_transcripts(ctx)
    words = [w for t in transcripts for w in t.texts]
    tokenizer = WordTokenizer.build(words, config.training.split_len)
    section = config.model.model_dump()
    section["vocab_size"] = section["vocab_size"] or len(tokenizer)
    try:
        model_config = ModelConfig(**section, seed=config.seed)
    except ValueError as e:
        raise ConfigurationError(f"Invalid model section: {e}") from e

    model = build_model(model_config, tokenizer)
    corpus = tokenizer.encode_corpus(words)
    trained = train(model, corpus, config.training.steps, config.training.learning_rate, config.training.seed)

    model_path = Path(config.paths.model)
    save_model(trained, model_path)
    ctx.manager.track(model_path)
    summary = {
        "initial_loss": corpus_loss(model, corpus),
        "final_loss": corpus_loss(trained, corpus),
        "vocab_size": len(tokenizer),
        "corpus_tokens": len(corpus),
        "fingerprint": trained.fingerprint,
    }
    return [model_path, ctx.manager.write_json("training.json", summary)]


def feature_path(ctx: RunContext, story_id: str, label: str) -> Path:
    return ctx.output / "features" / story_id / f"{file_label(label)}.feat"


def compute_features(
    ctx: RunContext,
    model: TinyLM,
    transcript: StoryTranscript,
    kind: str,
    method: Optional[str] = None,
) -> List[FeatureMatrix]:
    section = ctx.config.features
    if kind == "attribution":
        methods = [method] if method else section.methods
        return [
            attribution_features(transcript, model, m, section.window_len, section.steps_m) for m in methods
        ]
    if kind == "conductance":
        return [conductance_features(transcript, model, "all", section.window_len, section.steps_m)]
    if kind == "attention":
        return [attention_features(transcript, model)]
    if kind == "activation":
        layer = model.config.n_layers if section.activation_layer is None else section.activation_layer
        return [activation_features(transcript, model, layer)]
    raise ConfigurationError(f"Unknown feature kind: {kind}")


def run_features(ctx: RunContext, kind: Optional[str] = None, method: Optional[str] = None) -> List[Path]:
    """Write one feature matrix per transcript and requested kind (and method)."""
    model = load_lm(ctx)
    kinds = [kind] if kind else ctx.config.features.kinds
    paths = []
    for transcript in load_transcripts(ctx):
        for k in kinds:
            for features in compute_features(ctx, model, transcript, k, method):
                path = feature_path(ctx, transcript.story_id, features.label)
                write_feature_matrix(path, features)
                paths.append(ctx.manager.track(path))
    return paths


def run_attribute(ctx: RunContext, method: Optional[str] = None) -> List[Path]:
    """
    Debug dump of the raw per-window token scores behind the attribution
    features: one CSV per transcript with window_index, token_index,
    word_index, method and score.
    """
    model = load_lm(ctx)
    section = ctx.config.features
    methods = [method] if method else section.methods
    paths = []
    for transcript in load_transcripts(ctx):
        records = []
        for index, window in enumerate(build_windows(transcript, section.window_len).windows):
            ids, token_word_map, target_id = window_tokens(model, transcript, window)
            target = TargetSpec(target_token_id=target_id)
            for name in methods:
                scores = attribute(model, ids, target, name, section.steps_m).scores
                for token, (word, score) in enumerate(zip(token_word_map, scores)):
                    records.append((index, token, int(window.word_span[word]), name, float(score)))
        logger.info(f"Dumped {len(records)} token scores for story '{transcript.story_id}'.")
        frame = pd.DataFrame.from_records(
            records, columns=["window_index", "token_index", "word_index", "method", "score"]
        )
        paths.append(ctx.manager.write_csv(f"attributions/{transcript.story_id}.csv", frame))
    return paths


def stored_features(ctx: RunContext, model: Optional[TinyLM], transcript: StoryTranscript) -> List[FeatureMatrix]:
    """Feature matrices of the configured kinds, read from disk or computed when missing."""
    matrices = []
    for kind in ctx.config.features.kinds:
        methods = ctx.config.features.methods if kind == "attribution" else [None]
        for method in methods:
            wanted = "attribution:" + method if method else None
            existing = [
                p
                for p in sorted((ctx.output / "features" / transcript.story_id).glob(f"{kind}*.feat"))
                if wanted is None or p.stem == file_label(wanted)
            ]
            if existing:
                matrices.append(read_feature_matrix(existing[0]))
                continue
            if model is None:
                model = load_lm(ctx)
            for features in compute_features(ctx, model, transcript, kind, method):
                path = feature_path(ctx, transcript.story_id, features.label)
                write_feature_matrix(path, features)
                ctx.manager.track(path)
                matrices.append(features)
    return matrices


def run_synth(ctx: RunContext) -> List[Path]:
    """Generate the planted-signal dataset for the first transcript."""
    section = ctx.config.synthetic
    if section is None:
        raise ConfigurationError("The synth stage needs a 'synthetic' config section")
    transcript = load_transcripts(ctx)[0]
    model = load_lm(ctx)
    spec = section.spec.model_copy(update={"story_id": transcript.story_id})

    if section.source == "layers":
        layer_features = {
            layer: conductance_features(
                transcript, model, layer, ctx.config.features.window_len, ctx.config.features.steps_m
            )
            for layer in range(1, model.config.n_layers + 1)
        }
        dataset, _ = generate_layer_groups(spec, layer_features, transcript)
    else:
        features = attribution_features(
            transcript, model, section.method, ctx.config.features.window_len, ctx.config.features.steps_m
        )
        dataset, _ = generate_synthetic(spec, features, transcript)
    return [ctx.manager.track(p) for p in write_bold_dataset(ctx.config.paths.bold_dir, dataset)]


def score_path(ctx: RunContext, label: str, subject_id: str) -> Path:
    return ctx.output / "scores" / file_label(label) / f"{subject_id}.score"


def encode_jobs(
    ctx: RunContext,
    matrices: List[FeatureMatrix],
    transcript: StoryTranscript,
    dataset: BoldDataset,
) -> Dict[str, List[BrainScoreMap]]:
    """Every (feature space x subject) encoding job on the bounded worker pool."""
    jobs = [(features, run) for features in matrices for run in dataset.runs]
    results = Parallel(n_jobs=WORKERS, prefer="threads")(
        delayed(brain_score_cv)(features, transcript, run, ctx.config.encoder) for features, run in jobs
    )
    by_label: Dict[str, List[BrainScoreMap]] = {}
    for (features, _), scores in zip(jobs, results):
        by_label.setdefault(features.label, []).append(scores)
    return by_label


def score_frame(maps: List[BrainScoreMap]) -> pd.DataFrame:
    frame = pd.DataFrame({"voxel_id": np.arange(maps[0].n_voxels)})
    frame["mean_score"] = np.mean([m.scores for m in maps], axis=0)
    for scores in maps:
        frame[scores.subject_id] = scores.scores
    frame["degenerate"] = np.any([m.degenerate for m in maps], axis=0)
    return frame


def run_encode(ctx: RunContext) -> List[Path]:
    """Brain scores per feature space and subject, plus one CSV per feature space."""
    dataset = load_dataset(ctx)
    transcript = story_transcript(load_transcripts(ctx), dataset.story_id)
    matrices = stored_features(ctx, None, transcript)
    paths = []
    for label, maps in encode_jobs(ctx, matrices, transcript, dataset).items():
        for scores in maps:
            path = score_path(ctx, label, scores.subject_id)
            write_score_map(path, scores)
            paths.append(ctx.manager.track(path))
        paths.append(ctx.manager.write_csv(f"scores/{file_label(label)}.csv", score_frame(maps)))
    return paths


def run_ceiling(ctx: RunContext) -> List[Path]:
    dataset = load_dataset(ctx)
    ceiling = isc_noise_ceiling(dataset.as_array(), ctx.config.stats.ceiling_folds)
    frame = pd.DataFrame(
        {
            "voxel_id": np.arange(len(ceiling.ceiling)),
            "ceiling": ceiling.ceiling,
            "degenerate": ceiling.degenerate,
        }
    )
    return [ctx.manager.write_csv(CEILING_FILE, frame)]


def subject_scores(ctx: RunContext, label: str, subjects: List[str]) -> np.ndarray:
    """subjects x voxels scores read back from the encode stage."""
    return np.stack([read_score_map(require_path(str(score_path(ctx, label, s)), "score map")).scores for s in subjects])


def encoded_labels(ctx: RunContext) -> List[str]:
    root = ctx.output / "scores"
    if not root.is_dir():
        raise ConfigurationError(f"No brain scores under {root}; run the encode stage first")
    return sorted(p.stem for p in root.glob("*.csv"))


def ground_truth_summary(dataset: BoldDataset, mask: np.ndarray) -> Dict[str, float]:
    planted = np.zeros(dataset.n_voxels, dtype=bool)
    planted[dataset.ground_truth.signal_voxel_ids] = True
    detected = int(mask.sum())
    return {
        "sensitivity": float((mask & planted).sum() / planted.sum()) if planted.any() else float("nan"),
        "false_discovery_rate": float((mask & ~planted).sum() / detected) if detected else 0.0,
        "n_detected": detected,
    }


def run_stats(ctx: RunContext) -> List[Path]:
    """Voxel significance per feature space, ROI summaries and the feature-space comparison."""
    config = ctx.config
    dataset = load_dataset(ctx)
    subjects = dataset.subject_ids
    labels = encoded_labels(ctx)
    roi_labels = None
    if config.paths.roi_labels:
        roi_labels = labels_per_voxel(read_roi_labels(require_path(config.paths.roi_labels, "ROI label file")), dataset.n_voxels)
    ceiling_path = ctx.output / CEILING_FILE
    ceiling = pd.read_csv(ceiling_path)["ceiling"].to_numpy() if ceiling_path.is_file() else None

    paths, masks, summary = [], {}, {}
    scores_by_label = {label: subject_scores(ctx, label, subjects) for label in labels}
    for label, scores in scores_by_label.items():
        result = voxel_significance(scores, config.stats.q)
        masks[label] = result.mask
        paths.append(ctx.manager.write_csv(f"significance/{label}.csv", result.to_frame()))
        if dataset.ground_truth is not None:
            summary[label] = ground_truth_summary(dataset, result.mask)
        if roi_labels is not None:
            paths.append(ctx.manager.write_csv(f"roi/{label}.csv", group_mean(scores, roi_labels)))
            if ceiling is not None:
                normalized = roi_ceiling_summary(scores, ceiling, roi_labels, config.stats.ceiling_epsilon)
                paths.append(ctx.manager.write_csv(f"roi/{label}_ceiling.csv", normalized))

    mask_frame = pd.DataFrame({"voxel_id": np.arange(dataset.n_voxels)})
    for label, mask in masks.items():
        mask_frame[label] = mask
    paths.append(ctx.manager.write_csv("significance_mask.csv", mask_frame))

    methods = [label for label in labels if label.startswith("attribution-")]
    if len(methods) >= 3:
        stacked = np.stack([scores_by_label[m] for m in methods], axis=1)
        comparison = compare_feature_spaces(
            stacked, methods, np.stack([masks[m] for m in methods]), config.stats.q
        )
        paths.append(ctx.manager.write_csv("comparison.csv", comparison))
    if summary:
        paths.append(ctx.manager.write_json("planted_recovery.json", summary))
    return paths


def run_layers(ctx: RunContext) -> List[Path]:
    """
    Conductance layer sweep: one encoding job per block and subject, voxel
    layer preference, per-word layer importance, their distributions and
    alignment (per story and pooled), and the POS breakdown.
    """
    config = ctx.config
    model = load_lm(ctx)
    dataset = load_dataset(ctx)
    transcripts = load_transcripts(ctx)
    transcript = story_transcript(transcripts, dataset.story_id)
    layers = list(range(1, model.config.n_layers + 1))
    section = config.features

    matrices = [conductance_features(transcript, model, layer, section.window_len, section.steps_m) for layer in layers]
    by_label = encode_jobs(ctx, matrices, transcript, dataset)
    subject_layer_scores = np.stack(
        [np.stack([m.scores for m in by_label[features.label]]) for features in matrices]
    )
    layer_scores = subject_layer_scores.mean(axis=1)
    mask = np.zeros(dataset.n_voxels, dtype=bool)
    for per_subject in subject_layer_scores:
        mask |= voxel_significance(per_subject, config.stats.layer_q).mask
    preference = layer_preference(layer_scores, mask, layers)

    paths = []
    frame = pd.DataFrame({"voxel_id": np.arange(dataset.n_voxels)})
    for layer, scores in zip(layers, layer_scores):
        frame[f"layer_{layer}"] = scores
    frame["significant"] = mask
    frame["preferred_layer"] = preference.preferred
    frame["tie"] = preference.ties
    paths.append(ctx.manager.write_csv("layers/layer_scores.csv", frame))

    alignment, pooled_words, distribution_frames = {}, [], []
    for story in transcripts:
        importance = word_layer_importance(story, model, section.window_len, section.steps_m)
        pooled_words.append(importance.best_layer)
        words = pd.DataFrame({"word_index": importance.word_indices, "best_layer": importance.best_layer})
        for layer in layers:
            words[f"layer_{layer}"] = importance.values[:, layer - 1]
        paths.append(ctx.manager.write_csv(f"layers/word_importance_{story.story_id}.csv", words))
        distributions = layer_distributions(preference, importance.best_layer, layers)
        distribution_frames.append(distributions.to_frame().assign(story=story.story_id))
        result = importance_alignment(distributions)
        alignment[story.story_id] = {"r": None if result.undefined else result.r, "undefined": result.undefined}

        if config.paths.pos_tags and story is transcripts[0]:
            tags = read_pos_tags(require_path(config.paths.pos_tags, "POS tag file"))
            pos = pos_grouped_importance(importance.best_layer, tags, layers, importance.word_indices)
            paths.append(ctx.manager.write_csv("layers/pos_importance.csv", pos.reset_index()))

    pooled = layer_distributions(preference, np.concatenate(pooled_words), layers)
    distribution_frames.append(pooled.to_frame().assign(story="pooled"))
    result = importance_alignment(pooled)
    alignment["pooled"] = {"r": None if result.undefined else result.r, "undefined": result.undefined}
    if dataset.ground_truth is not None and dataset.ground_truth.planted_layers:
        alignment["planted_layer_recovery"] = planted_layer_recovery(dataset, preference.preferred)
    paths.append(ctx.manager.write_csv("layers/layer_distributions.csv", pd.concat(distribution_frames)))
    paths.append(ctx.manager.write_json("layers/alignment.json", alignment))
    return paths


def planted_layer_recovery(dataset: BoldDataset, preferred: np.ndarray) -> Dict[str, float]:
    """Share of each planted group's significant voxels assigned to its generating layer."""
    groups: Dict[int, List[int]] = {}
    for voxel, layer in dataset.ground_truth.planted_layers.items():
        groups.setdefault(layer, []).append(int(voxel))
    recovery = {}
    for layer, voxels in sorted(groups.items()):
        assigned = preferred[voxels]
        significant = assigned[assigned > 0]
        recovery[str(layer)] = float((significant == layer).mean()) if len(significant) else float("nan")
    return recovery


STAGES: Dict[str, Callable[[RunContext], List[Path]]] = {
    "train-lm": run_train_lm,
    "features": run_features,
    "synth": run_synth,
    "encode": run_encode,
    "ceiling": run_ceiling,
    "stats": run_stats,
    "layers": run_layers,
}

PIPELINE_ORDER = ["train-lm", "features", "synth", "encode", "ceiling", "stats", "layers"]
