from dataclasses import dataclass
from logging import getLogger, basicConfig

import numpy as np

from src.config import LOG_FORMAT, LOG_LEVEL, DEFAULT_FOLDS
from src.encoder.scoring import contiguous_folds, pearson_columns
from src.errors import InputError

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)


@dataclass(frozen=True)
class NoiseCeiling:
    """
    Per-voxel inter-subject correlation ceiling. Degenerate voxels hold 0 and
    are marked in `degenerate`.
    """

    ceiling: np.ndarray
    n_folds: int
    n_subjects: int
    degenerate: np.ndarray


def isc_noise_ceiling(bold: np.ndarray, n_folds: int = DEFAULT_FOLDS) -> NoiseCeiling:
    """
    Within each contiguous TR block, correlate every subject's voxel series with
    the across-subject mean that includes that subject, then average over
    blocks and subjects.
    Args:
        bold (np.ndarray): subjects x voxels x TRs.
        n_folds (int): Number of contiguous TR blocks.
    Returns:
        NoiseCeiling: One value per voxel in [-1, 1].
    Raises:
        InputError: With fewer than two subjects or fewer TRs than folds.
    """
    bold = np.asarray(bold, dtype=np.float64)
    if bold.ndim != 3:
        raise InputError(f"Expected subjects x voxels x TRs, got shape {bold.shape}")
    n_subjects, n_voxels, n_trs = bold.shape
    if n_subjects < 2:
        raise InputError("The noise ceiling needs at least two subjects")
    logger.info(f"Computing ISC ceiling: {n_subjects} subjects, {n_voxels} voxels, {n_folds} folds.")

    group_mean = bold.mean(axis=0)
    total = np.zeros(n_voxels)
    degenerate = np.zeros(n_voxels, dtype=bool)
    for rows in contiguous_folds(n_trs, n_folds):
        reference = group_mean[:, rows].T
        for subject in range(n_subjects):
            r, flagged = pearson_columns(bold[subject][:, rows].T, reference)
            total += r
            degenerate |= flagged

    ceiling = total / (n_folds * n_subjects)
    ceiling[degenerate] = 0.0
    if degenerate.any():
        logger.warning(f"{int(degenerate.sum())} degenerate voxel(s) have an undefined ceiling.")
    return NoiseCeiling(np.clip(ceiling, -1.0, 1.0), n_folds, n_subjects, degenerate)
