from dataclasses import dataclass
from logging import getLogger, basicConfig
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import pearsonr

from src.config import LOG_FORMAT, LOG_LEVEL
from src.errors import InputError

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)

NOT_SIGNIFICANT = -1


@dataclass(frozen=True)
class LayerPreference:
    """preferred holds a layer label per voxel, NOT_SIGNIFICANT outside the mask."""

    preferred: np.ndarray
    ties: np.ndarray
    layers: np.ndarray


@dataclass(frozen=True)
class LayerDistributions:
    """
    Percentages per layer. A distribution computed from no items is all zeros
    and marked empty.
    """

    layers: np.ndarray
    voxel_pref_pct: np.ndarray
    word_importance_pct: np.ndarray
    voxel_empty: bool = False
    word_empty: bool = False

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "layer": self.layers,
                "voxel_pref_pct": self.voxel_pref_pct,
                "word_importance_pct": self.word_importance_pct,
            }
        )


@dataclass(frozen=True)
class AlignmentResult:
    r: float
    undefined: bool = False


def _layer_labels(n_layers: int, layers: Optional[Sequence[int]]) -> np.ndarray:
    labels = np.arange(1, n_layers + 1) if layers is None else np.asarray(list(layers), dtype=np.int64)
    if len(labels) != n_layers:
        raise InputError(f"{len(labels)} layer labels for {n_layers} layers")
    return labels


def layer_preference(
    scores_per_layer: np.ndarray,
    sig_mask: Optional[np.ndarray] = None,
    layers: Optional[Sequence[int]] = None,
) -> LayerPreference:
    """
    For every significant voxel, the layer whose features predicted it best.
    Ties resolve to the first layer and are flagged.
    Args:
        scores_per_layer (np.ndarray): n_layers x n_voxels brain scores.
        sig_mask (Optional[np.ndarray]): Voxels to assign; all when omitted.
        layers (Optional[Sequence[int]]): Row labels, 1..n_layers by default.
    Returns:
        LayerPreference: Preferred layer label per voxel.
    """
    scores = np.atleast_2d(np.asarray(scores_per_layer, dtype=np.float64))
    n_layers, n_voxels = scores.shape
    labels = _layer_labels(n_layers, layers)
    mask = np.ones(n_voxels, dtype=bool) if sig_mask is None else np.asarray(sig_mask, dtype=bool)
    if mask.shape != (n_voxels,):
        raise InputError(f"Mask of shape {mask.shape} does not match {n_voxels} voxels")

    best = np.argmax(scores, axis=0)
    ties = ((scores == scores.max(axis=0)).sum(axis=0) > 1) & mask
    preferred = np.where(mask, labels[best], NOT_SIGNIFICANT)
    if ties.any():
        logger.warning(f"{int(ties.sum())} voxel(s) tie between layers; first layer kept.")
    return LayerPreference(preferred, ties, labels)


def _percentages(values: np.ndarray, layers: np.ndarray) -> tuple[np.ndarray, bool]:
    values = np.asarray(values)
    counts = np.array([(values == layer).sum() for layer in layers], dtype=np.float64)
    total = counts.sum()
    if total == 0:
        return np.zeros(len(layers)), True
    return counts / total * 100.0, False


def layer_distributions(
    preferred_layers: np.ndarray | LayerPreference,
    word_best_layers: np.ndarray,
    layers: Sequence[int],
) -> LayerDistributions:
    """
    Share of significant voxels preferring each layer, and share of words most
    influenced by each layer.
    """
    if isinstance(preferred_layers, LayerPreference):
        preferred_layers = preferred_layers.preferred
    layers = np.asarray(list(layers), dtype=np.int64)
    preferred = np.asarray(preferred_layers)
    voxel_pct, voxel_empty = _percentages(preferred[preferred != NOT_SIGNIFICANT], layers)
    word_pct, word_empty = _percentages(word_best_layers, layers)
    if voxel_empty:
        logger.warning("No significant voxels; the voxel preference distribution is empty.")
    return LayerDistributions(layers, voxel_pct, word_pct, voxel_empty, word_empty)


def importance_alignment(layer_dists: LayerDistributions) -> AlignmentResult:
    """
    Pearson correlation between the per-layer voxel preference and word
    importance percentages. Constant or empty distributions are undefined.
    """
    a, b = layer_dists.voxel_pref_pct, layer_dists.word_importance_pct
    if len(a) != len(b):
        raise InputError("Distributions cover different layers")
    if len(a) < 2 or np.ptp(a) == 0 or np.ptp(b) == 0:
        logger.warning("Layer distribution is constant; alignment is undefined.")
        return AlignmentResult(float("nan"), undefined=True)
    return AlignmentResult(float(pearsonr(a, b)[0]))
