from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd

from src.errors import InputError


@dataclass(frozen=True)
class DesignMatrix:
    """TRs x features regressors; `provenance` lists the steps that produced it."""

    values: np.ndarray
    tr_s: float
    provenance: List[str] = field(default_factory=list)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise InputError(f"Design matrix must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InputError("Design matrix contains non-finite values")

    @property
    def n_trs(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class BoldRun:
    """
    One subject's response to one story, voxels x TRs.
    """

    values: np.ndarray
    subject_id: str
    story_id: str
    tr_s: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise InputError(f"BOLD run must be voxels x TRs, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InputError(f"BOLD run for subject '{self.subject_id}' contains non-finite values")
        if self.tr_s <= 0:
            raise InputError(f"tr_s must be positive, got {self.tr_s}")

    @property
    def n_voxels(self) -> int:
        return self.values.shape[0]

    @property
    def n_trs(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class BrainScoreMap:
    """
    Per-voxel held-out Pearson correlation. `scores` is the mean over folds;
    degenerate voxels carry the sentinel 0 in the affected folds.
    """

    scores: np.ndarray
    per_fold: np.ndarray
    alphas: np.ndarray
    degenerate: np.ndarray
    subject_id: str
    story_id: str
    feature_label: str

    @property
    def n_voxels(self) -> int:
        return len(self.scores)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"voxel_id": np.arange(self.n_voxels), "score": self.scores})
        for fold, values in enumerate(self.per_fold):
            frame[f"fold_{fold}"] = values
        for fold, values in enumerate(self.alphas):
            frame[f"alpha_fold_{fold}"] = values
        frame["degenerate"] = self.degenerate
        return frame


@dataclass(frozen=True)
class CeilingNormalized:
    """Scores as a percentage of the noise ceiling; undefined voxels hold NaN."""

    percent: np.ndarray
    undefined: np.ndarray
    epsilon: float

    def defined_mean(self, mask: Optional[np.ndarray] = None) -> float:
        keep = ~self.undefined if mask is None else (~self.undefined & mask)
        return float(self.percent[keep].mean()) if keep.any() else float("nan")
