"""
Rank tests and multiple-comparison control used for voxel significance.
"""

from dataclasses import dataclass
from logging import getLogger, basicConfig
from typing import Literal, Sequence, Tuple

import numpy as np
from scipy.stats import false_discovery_control, friedmanchisquare, norm, rankdata

from src.config import LOG_FORMAT, LOG_LEVEL, DEFAULT_Q, WILCOXON_EXACT_MAX_N, WILCOXON_MIN_N
from src.errors import InputError

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)


@dataclass(frozen=True)
class WilcoxonResult:
    """`undefined` results (too few non-zero differences) carry p = 1."""

    p: float
    statistic: float
    n: int
    undefined: bool = False
    method: str = "exact"


@dataclass(frozen=True)
class PValueSet:
    p: np.ndarray
    test: Literal["wilcoxon_greater", "friedman"]
    n_samples: int
    undefined: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "undefined", np.asarray(self.undefined, dtype=bool))
        if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
            raise InputError("p-values must lie in [0, 1]")


@dataclass(frozen=True)
class FdrResult:
    reject: np.ndarray
    adjusted: np.ndarray
    q: float


def _exact_upper_tail(doubled_ranks: np.ndarray, observed: int) -> float:
    """
    P(W+ >= observed) under the sign-flip null, by dynamic programming over the
    doubled (integer) midranks so ties are handled exactly.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for rank in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[rank:] = counts[: total + 1 - rank]
        counts = counts + shifted
    return float(counts[observed:].sum()) / float(2 ** len(doubled_ranks))


def wilcoxon_greater(
    diffs: Sequence[float] | np.ndarray,
    method: Literal["auto", "exact", "approx"] = "auto",
) -> WilcoxonResult:
    """
    One-sided Wilcoxon signed-rank test of median(diffs) > 0.
    Exact differences of zero are dropped. The exact null distribution is used
    up to 25 non-zero differences, the normal approximation with tie and
    continuity corrections above.
    Args:
        diffs: One difference per subject.
        method (str): "auto", or force "exact" / "approx".
    Returns:
        WilcoxonResult: p, the W+ statistic and the number of non-zero differences.
    """
    values = np.asarray(diffs, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise InputError("Differences contain non-finite values")
    values = values[values != 0]
    n = len(values)
    if n < WILCOXON_MIN_N:
        return WilcoxonResult(1.0, 0.0, n, undefined=True, method="none")

    ranks = rankdata(np.abs(values))
    statistic = float(ranks[values > 0].sum())
    use_exact = method == "exact" or (method == "auto" and n <= WILCOXON_EXACT_MAX_N)
    if use_exact:
        doubled = np.rint(2 * ranks).astype(np.int64)
        observed = int(np.rint(2 * statistic))
        return WilcoxonResult(min(1.0, _exact_upper_tail(doubled, observed)), statistic, n, method="exact")

    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - (tie_counts**3 - tie_counts).sum() / 48.0
    if variance <= 0:
        return WilcoxonResult(1.0, statistic, n, undefined=True, method="approx")
    z = (statistic - mean - 0.5) / np.sqrt(variance)
    return WilcoxonResult(float(norm.sf(z)), statistic, n, method="approx")


def voxel_wilcoxon(diffs: np.ndarray) -> PValueSet:
    """
    wilcoxon_greater for every column of a subjects x voxels difference matrix.
    """
    diffs = np.atleast_2d(np.asarray(diffs, dtype=np.float64))
    results = [wilcoxon_greater(diffs[:, v]) for v in range(diffs.shape[1])]
    undefined = np.array([r.undefined for r in results], dtype=bool)
    if undefined.any():
        logger.warning(f"{int(undefined.sum())} voxel(s) have too few non-zero differences; p set to 1.")
    return PValueSet(np.array([r.p for r in results]), "wilcoxon_greater", diffs.shape[0], undefined)


def friedman(scores: np.ndarray) -> Tuple[float, float]:
    """
    Friedman chi-square test over an n_subjects x k_methods table, with
    midranks and the tie correction. A table without any within-row variation
    returns (0, 1).
    Raises:
        InputError: If k < 3 or n < 2.
    """
    table = np.asarray(scores, dtype=np.float64)
    if table.ndim != 2 or table.shape[1] < 3 or table.shape[0] < 2:
        raise InputError(f"Friedman needs at least 2 subjects and 3 methods, got shape {table.shape}")
    if np.all(table == table[:, :1]):
        return 0.0, 1.0
    statistic, p = friedmanchisquare(*table.T)
    return float(statistic), float(p)


def voxel_friedman(scores: np.ndarray) -> Tuple[np.ndarray, PValueSet]:
    """friedman per voxel over a subjects x methods x voxels array."""
    scores = np.asarray(scores, dtype=np.float64)
    results = [friedman(scores[:, :, v]) for v in range(scores.shape[2])]
    statistics = np.array([r[0] for r in results])
    p = np.array([r[1] for r in results])
    return statistics, PValueSet(p, "friedman", scores.shape[0], np.zeros(len(p), dtype=bool))


def bh_fdr(p: Sequence[float] | np.ndarray, q: float = DEFAULT_Q) -> FdrResult:
    """
    Benjamini-Hochberg step-up procedure at level q.
    Returns:
        FdrResult: Reject mask and BH-adjusted p-values (monotone in sorted order).
    """
    p = np.asarray(p, dtype=np.float64).ravel()
    if not 0 < q < 1:
        raise InputError(f"q must be in (0, 1), got {q}")
    if len(p) == 0:
        return FdrResult(np.zeros(0, dtype=bool), np.zeros(0), q)
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise InputError("p-values must lie in [0, 1]")
    adjusted = false_discovery_control(p, method="bh")
    return FdrResult(adjusted <= q, adjusted, q)
