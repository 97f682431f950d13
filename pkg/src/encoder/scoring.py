from logging import getLogger, basicConfig
from typing import List, Tuple

import numpy as np

from src.config import LOG_FORMAT, LOG_LEVEL, CEILING_EPSILON
from src.encoder.design import add_fir_delays, resample_to_tr
from src.encoder.ridge import preprocess, ridge_fit
from src.encoder.types import BoldRun, BrainScoreMap, CeilingNormalized, DesignMatrix
from src.errors import InputError
from src.features.types import FeatureMatrix, StoryTranscript
from src.schemas.encoder_schema import EncodingConfig

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)

# A series whose standard deviation is below this (relative to its scale) has no defined correlation.
DEGENERATE_STD = 1e-12


def pearson_columns(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Column-wise Pearson correlation of two n x k matrices.
    Returns:
        Tuple[np.ndarray, np.ndarray]: r per column (0 where undefined) and the
        mask of columns where either series is constant.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64).T).T
    b = np.atleast_2d(np.asarray(b, dtype=np.float64).T).T
    a_centered = a - a.mean(axis=0)
    b_centered = b - b.mean(axis=0)
    a_norm = np.linalg.norm(a_centered, axis=0)
    b_norm = np.linalg.norm(b_centered, axis=0)
    scale_a = np.sqrt(len(a)) * (1.0 + np.abs(a).max(axis=0))
    scale_b = np.sqrt(len(b)) * (1.0 + np.abs(b).max(axis=0))
    degenerate = (a_norm <= DEGENERATE_STD * scale_a) | (b_norm <= DEGENERATE_STD * scale_b)
    denominator = np.where(degenerate, 1.0, a_norm * b_norm)
    r = np.where(degenerate, 0.0, (a_centered * b_centered).sum(axis=0) / denominator)
    return np.clip(r, -1.0, 1.0), degenerate


def contiguous_folds(n_trs: int, n_folds: int) -> List[np.ndarray]:
    """Split TR indices into n_folds contiguous held-out blocks."""
    if n_trs < n_folds:
        raise InputError(f"{n_trs} TRs cannot be split into {n_folds} folds")
    return np.array_split(np.arange(n_trs), n_folds)


def design_for_run(features: FeatureMatrix, transcript: StoryTranscript, bold: BoldRun, config: EncodingConfig) -> DesignMatrix:
    return add_fir_delays(resample_to_tr(features, transcript, bold.n_trs, bold.tr_s), config.delays)


def score_design(
    design: DesignMatrix,
    bold: BoldRun,
    config: EncodingConfig,
    use_pca: bool = False,
    feature_label: str = "design",
) -> BrainScoreMap:
    """
    Cross-validated brain scores for a ready design matrix. Each fold fits the
    preprocessing and the ridge penalties on the remaining TRs only.
    """
    if design.n_trs != bold.n_trs:
        raise InputError(f"Design has {design.n_trs} TRs but the BOLD run has {bold.n_trs}")
    folds = contiguous_folds(bold.n_trs, config.n_folds)
    responses = bold.values.T

    per_fold = np.zeros((config.n_folds, bold.n_voxels))
    alphas = np.zeros((config.n_folds, bold.n_voxels))
    degenerate = np.zeros(bold.n_voxels, dtype=bool)
    for fold, test_rows in enumerate(folds):
        train_rows = np.setdiff1d(np.arange(bold.n_trs), test_rows)
        _, transformed = preprocess(design.values, train_rows, config, use_pca)
        offset = responses[train_rows].mean(axis=0)
        fit = ridge_fit(transformed[train_rows], responses[train_rows] - offset, config.alphas)
        predicted = fit.predict(transformed[test_rows])
        per_fold[fold], fold_degenerate = pearson_columns(predicted, responses[test_rows])
        alphas[fold] = fit.alphas
        degenerate |= fold_degenerate

    if degenerate.any():
        logger.warning(
            f"{int(degenerate.sum())} degenerate voxel(s) for subject '{bold.subject_id}' scored with sentinel 0."
        )
    return BrainScoreMap(
        scores=per_fold.mean(axis=0),
        per_fold=per_fold,
        alphas=alphas,
        degenerate=degenerate,
        subject_id=bold.subject_id,
        story_id=bold.story_id,
        feature_label=feature_label,
    )


def brain_score_cv(
    features: FeatureMatrix,
    transcript: StoryTranscript,
    bold: BoldRun,
    config: EncodingConfig,
) -> BrainScoreMap:
    """
    Resample to TRs, add FIR delays, then run contiguous-fold cross-validation
    (z-scoring, PCA for attention features, ridge, Pearson per voxel).
    Args:
        features (FeatureMatrix): Word-level features.
        transcript (StoryTranscript): Timing of the words.
        bold (BoldRun): Recorded responses.
        config (EncodingConfig): Folds, delays, alphas and PCA size.
    Returns:
        BrainScoreMap: Mean held-out correlation per voxel.
    Raises:
        InputError: On misaligned data or fewer TRs than folds.
    """
    logger.info(
        f"Encoding {features.label} for subject '{bold.subject_id}': "
        f"{bold.n_voxels} voxels, {bold.n_trs} TRs, {config.n_folds} folds."
    )
    design = design_for_run(features, transcript, bold, config)
    return score_design(design, bold, config, use_pca=features.kind == "attention", feature_label=features.label)


def normalize_by_ceiling(
    scores: BrainScoreMap | np.ndarray,
    ceiling: np.ndarray,
    epsilon: float = CEILING_EPSILON,
) -> CeilingNormalized:
    """
    score / ceiling * 100 where the ceiling exceeds epsilon; other voxels are
    flagged undefined and hold NaN.
    """
    values = scores.scores if isinstance(scores, BrainScoreMap) else np.asarray(scores, dtype=np.float64)
    ceiling = np.asarray(ceiling, dtype=np.float64)
    if values.shape != ceiling.shape:
        raise InputError(f"Scores shape {values.shape} does not match ceiling shape {ceiling.shape}")
    undefined = ~(ceiling > epsilon)
    percent = np.full(values.shape, np.nan)
    percent[~undefined] = values[~undefined] / ceiling[~undefined] * 100.0
    if undefined.any():
        logger.warning(f"{int(undefined.sum())} voxel(s) have a ceiling below {epsilon}; marked undefined.")
    return CeilingNormalized(percent, undefined, epsilon)
