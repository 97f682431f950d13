from logging import getLogger, basicConfig
from pathlib import Path

import numpy as np

from src.config import LOG_FORMAT, LOG_LEVEL
from src.encoder.types import BrainScoreMap
from src.errors import InputError
from src.features.types import FeatureMatrix
from utils.binary_codec import BinaryCodec, CodecError

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)

feature_codec = BinaryCodec("feature_matrix")
score_codec = BinaryCodec("score_map")


def write_feature_matrix(path: str | Path, features: FeatureMatrix) -> None:
    header = {
        "feature_kind": features.kind,
        "story_id": features.story_id,
        "shape": list(features.shape),
        "word_indices": [int(i) for i in features.word_indices],
        "meta": features.meta,
    }
    feature_codec.write(path, header, {"values": features.values})


def read_feature_matrix(path: str | Path) -> FeatureMatrix:
    """
    Read a feature matrix, including ones computed outside this package.
    Raises:
        CodecError: If the header disagrees with the payload or the matrix is invalid.
    """
    header, blocks = feature_codec.read(path)
    values = blocks.get("values")
    if values is None or list(values.shape) != list(header.get("shape", [])):
        raise CodecError(f"{path}: header shape {header.get('shape')} does not match the payload")
    try:
        return FeatureMatrix(
            values,
            header["feature_kind"],
            np.asarray(header["word_indices"], dtype=np.int64),
            header["story_id"],
            header.get("meta", {}),
        )
    except (KeyError, ValueError, InputError) as e:
        raise CodecError(f"{path}: invalid feature matrix header: {e}") from e


def write_score_map(path: str | Path, scores: BrainScoreMap) -> None:
    header = {
        "subject_id": scores.subject_id,
        "story_id": scores.story_id,
        "feature_label": scores.feature_label,
    }
    blocks = {
        "scores": scores.scores,
        "per_fold": scores.per_fold,
        "alphas": scores.alphas,
        "degenerate": scores.degenerate.astype(np.float64),
    }
    score_codec.write(path, header, blocks)


def read_score_map(path: str | Path) -> BrainScoreMap:
    header, blocks = score_codec.read(path)
    try:
        return BrainScoreMap(
            scores=blocks["scores"],
            per_fold=blocks["per_fold"],
            alphas=blocks["alphas"],
            degenerate=blocks["degenerate"].astype(bool),
            subject_id=header["subject_id"],
            story_id=header["story_id"],
            feature_label=header["feature_label"],
        )
    except KeyError as e:
        raise CodecError(f"{path}: missing field {e}") from e
