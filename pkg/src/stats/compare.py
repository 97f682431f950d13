from dataclasses import dataclass
from itertools import permutations
from logging import getLogger, basicConfig
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from src.config import LOG_FORMAT, LOG_LEVEL, DEFAULT_Q
from src.errors import InputError
from src.stats.significance import FdrResult, PValueSet, bh_fdr, voxel_friedman, voxel_wilcoxon, wilcoxon_greater

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)

NO_WINNER = "none"


@dataclass(frozen=True)
class SignificanceResult:
    """Per-voxel one-sided Wilcoxon across subjects followed by BH correction."""

    pvalues: PValueSet
    fdr: FdrResult

    @property
    def mask(self) -> np.ndarray:
        return self.fdr.reject & ~self.pvalues.undefined

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "voxel_id": np.arange(len(self.pvalues.p)),
                "p": self.pvalues.p,
                "p_adjusted": self.fdr.adjusted,
                "reject": self.mask,
                "undefined": self.pvalues.undefined,
            }
        )


def voxel_significance(
    subject_scores: np.ndarray,
    q: float = DEFAULT_Q,
    baseline: Optional[np.ndarray] = None,
) -> SignificanceResult:
    """
    Test, per voxel, whether brain scores pooled across subjects exceed the
    baseline (zero by default, or e.g. a control feature space's scores).
    Args:
        subject_scores (np.ndarray): subjects x voxels.
        q (float): FDR level.
        baseline (Optional[np.ndarray]): subjects x voxels scores subtracted first.
    """
    scores = np.atleast_2d(np.asarray(subject_scores, dtype=np.float64))
    diffs = scores if baseline is None else scores - np.asarray(baseline, dtype=np.float64)
    logger.info(f"Voxel significance: {diffs.shape[0]} samples, {diffs.shape[1]} voxels, q={q}.")
    pvalues = voxel_wilcoxon(diffs)
    fdr = bh_fdr(pvalues.p, q)
    return SignificanceResult(pvalues, fdr)


def compare_feature_spaces(
    scores: np.ndarray,
    names: Sequence[str],
    sig_masks: Optional[np.ndarray] = None,
    q: float = DEFAULT_Q,
) -> pd.DataFrame:
    """
    Compare k feature spaces voxel by voxel. Voxels significant for every space
    get a Friedman test (BH-corrected over voxels); where it rejects, one-sided
    Wilcoxon tests for every ordered pair of spaces are BH-corrected together,
    and a space that beats all others is reported as the winner.
    Args:
        scores (np.ndarray): subjects x k x voxels brain scores.
        names (Sequence[str]): Feature space names, length k.
        sig_masks (Optional[np.ndarray]): k x voxels significance masks.
        q (float): FDR level for both corrections.
    Returns:
        pd.DataFrame: One row per tested voxel with the Friedman statistic,
        p, adjusted p, reject and the winning space.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 3 or scores.shape[1] != len(names):
        raise InputError(f"Scores of shape {scores.shape} do not match {len(names)} feature spaces")
    n_voxels = scores.shape[2]
    eligible = np.ones(n_voxels, dtype=bool) if sig_masks is None else np.asarray(sig_masks, dtype=bool).all(axis=0)
    voxels = np.flatnonzero(eligible)
    columns = ["voxel_id", "friedman_stat", "p", "p_adjusted", "reject", "winner"]
    if len(voxels) == 0:
        logger.warning("No voxel is significant for every feature space; nothing to compare.")
        return pd.DataFrame(columns=columns)

    statistics, pvalues = voxel_friedman(scores[:, :, voxels])
    friedman_fdr = bh_fdr(pvalues.p, q)

    pairs = list(permutations(range(len(names)), 2))
    tested: List[tuple] = []
    pair_p: List[float] = []
    for position in np.flatnonzero(friedman_fdr.reject):
        voxel = voxels[position]
        for a, b in pairs:
            tested.append((position, a, b))
            pair_p.append(wilcoxon_greater(scores[:, a, voxel] - scores[:, b, voxel]).p)
    pair_fdr = bh_fdr(pair_p, q)

    beats = {}
    for (position, a, b), reject in zip(tested, pair_fdr.reject):
        if reject:
            beats.setdefault((position, a), set()).add(b)
    winners = []
    for position in range(len(voxels)):
        winner = NO_WINNER
        for a in range(len(names)):
            if len(beats.get((position, a), ())) == len(names) - 1:
                winner = names[a]
        winners.append(winner)

    return pd.DataFrame(
        {
            "voxel_id": voxels,
            "friedman_stat": statistics,
            "p": pvalues.p,
            "p_adjusted": friedman_fdr.adjusted,
            "reject": friedman_fdr.reject,
            "winner": winners,
        }
    )
