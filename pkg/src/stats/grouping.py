from logging import getLogger, basicConfig
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from src.config import LOG_FORMAT, LOG_LEVEL, CEILING_EPSILON, OTHER_POS_TAG
from src.encoder.scoring import normalize_by_ceiling
from src.errors import InputError

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)

CI_Z = 1.96


def group_mean(
    scores: np.ndarray,
    labels: Sequence[Optional[str]],
    rois: Optional[Iterable[str]] = None,
) -> pd.DataFrame:
    """
    Mean score per ROI. With a subjects x voxels array, each subject's ROI mean
    is taken first and a 95% normal-approximation interval is reported across
    subjects. NaN scores and unlabeled voxels (None or "") are excluded.
    Args:
        scores (np.ndarray): Per-voxel scores, or subjects x voxels.
        labels (Sequence[Optional[str]]): ROI name per voxel.
        rois (Optional[Iterable[str]]): Expected ROI names; ROIs without
            voxels are reported with empty=True.
    Returns:
        pd.DataFrame: roi, n_voxels, mean, ci_low, ci_high, empty.
    """
    values = np.asarray(scores, dtype=np.float64)
    per_subject = values.ndim == 2
    values = np.atleast_2d(values)
    labels = np.array(["" if label is None else str(label) for label in labels], dtype=object)
    if len(labels) != values.shape[1]:
        raise InputError(f"{len(labels)} labels for {values.shape[1]} voxels")

    names = sorted({label for label in labels if label})
    if rois is not None:
        names = sorted(set(names) | set(rois))

    records = []
    for roi in names:
        members = labels == roi
        block = values[:, members]
        usable = ~np.isnan(block)
        if not usable.any():
            logger.warning(f"ROI '{roi}' has no scored voxels.")
            records.append({"roi": roi, "n_voxels": int(members.sum()), "mean": np.nan,
                            "ci_low": np.nan, "ci_high": np.nan, "empty": True})
            continue
        subject_means = np.array([row[~np.isnan(row)].mean() for row in block if (~np.isnan(row)).any()])
        mean = float(subject_means.mean())
        if per_subject and len(subject_means) > 1:
            half = CI_Z * subject_means.std(ddof=1) / np.sqrt(len(subject_means))
            low, high = mean - half, mean + half
        else:
            low = high = np.nan
        records.append({"roi": roi, "n_voxels": int(members.sum()), "mean": mean,
                        "ci_low": low, "ci_high": high, "empty": False})
    return pd.DataFrame.from_records(records, columns=["roi", "n_voxels", "mean", "ci_low", "ci_high", "empty"])


def roi_ceiling_summary(
    subject_scores: np.ndarray,
    ceiling: np.ndarray,
    labels: Sequence[Optional[str]],
    epsilon: float = CEILING_EPSILON,
) -> pd.DataFrame:
    """
    Per-ROI brain scores as a percentage of the noise ceiling, normalizing each
    subject's map before averaging. Voxels with an undefined ceiling are excluded.
    """
    subject_scores = np.atleast_2d(np.asarray(subject_scores, dtype=np.float64))
    normalized = np.stack([normalize_by_ceiling(row, ceiling, epsilon).percent for row in subject_scores])
    return group_mean(normalized, labels)


def pos_grouped_importance(
    word_best_layer: np.ndarray,
    pos_tags: Sequence[str] | Mapping[int, str],
    layers: Sequence[int],
    word_indices: Optional[np.ndarray] = None,
    known_tags: Optional[Iterable[str]] = None,
) -> pd.DataFrame:
    """
    Per POS tag, the percentage of words whose most influential layer is each
    layer. Rows sum to 100.
    Args:
        word_best_layer (np.ndarray): Layer label per scored word.
        pos_tags: Tag per scored word, or a mapping story position -> tag.
        layers (Sequence[int]): Layer labels, one column each.
        word_indices (Optional[np.ndarray]): Story positions of the scored
            words; needed when pos_tags is a mapping.
        known_tags (Optional[Iterable[str]]): Tags outside this set, and words
            without a tag, are grouped under "other".
    Returns:
        pd.DataFrame: Index tag, one column per layer.
    """
    word_best_layer = np.asarray(word_best_layer)
    if isinstance(pos_tags, Mapping):
        if word_indices is None:
            raise InputError("word_indices are required with a position -> tag mapping")
        tags = [pos_tags.get(int(i), OTHER_POS_TAG) for i in word_indices]
    else:
        tags = list(pos_tags)
    if len(tags) != len(word_best_layer):
        raise InputError(f"{len(tags)} tags for {len(word_best_layer)} words")
    if known_tags is not None:
        known = set(known_tags)
        tags = [tag if tag in known else OTHER_POS_TAG for tag in tags]

    frame = pd.DataFrame({"tag": tags, "layer": word_best_layer})
    counts = pd.crosstab(frame["tag"], frame["layer"]).reindex(columns=list(layers), fill_value=0)
    totals = counts.sum(axis=1).replace(0, np.nan)
    return counts.div(totals, axis=0).mul(100.0).fillna(0.0)


def pool_across_models(score_maps: Sequence[np.ndarray]) -> np.ndarray:
    """
    Concatenate per-voxel samples (subjects x voxels) from several language
    models into one sample set per voxel.
    """
    if not score_maps:
        raise InputError("No score maps to pool")
    maps = [np.atleast_2d(np.asarray(m, dtype=np.float64)) for m in score_maps]
    if len({m.shape[1] for m in maps}) != 1:
        raise InputError("Score maps cover different voxel counts")
    return np.concatenate(maps, axis=0)
