from dataclasses import dataclass
from logging import getLogger, basicConfig
from typing import Optional, Sequence

import numpy as np
from sklearn.decomposition import PCA
from sklearn.linear_model import RidgeCV
from sklearn.preprocessing import StandardScaler

from src.config import LOG_FORMAT, LOG_LEVEL
from src.errors import InputError
from src.schemas.encoder_schema import EncodingConfig

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)

# Columns whose training standard deviation falls below this are treated as constant.
MIN_STD = 1e-12
# PCA components whose variance is below this fraction of the largest are zeroed.
MIN_COMPONENT_VARIANCE = 1e-12


@dataclass
class FittedPreprocessor:
    """
    Z-scoring (and optional PCA) fitted on training rows only. `flagged` marks
    columns that were constant on the training rows; they are emitted as zeros.
    """

    scaler: StandardScaler
    flagged: np.ndarray
    pca: Optional[PCA] = None
    n_components: Optional[int] = None
    kept_components: Optional[np.ndarray] = None

    def transform(self, values: np.ndarray) -> np.ndarray:
        scaled = self.scaler.transform(values)
        scaled[:, self.flagged] = 0.0
        if self.pca is None:
            return scaled
        projected = self.pca.transform(scaled) * self.kept_components
        out = np.zeros((len(values), self.n_components))
        out[:, : projected.shape[1]] = projected
        return out


@dataclass(frozen=True)
class RidgeFit:
    """weights: n_features x n_voxels; alphas: chosen penalty per voxel."""

    weights: np.ndarray
    alphas: np.ndarray

    def predict(self, values: np.ndarray) -> np.ndarray:
        return values @ self.weights


def preprocess(
    values: np.ndarray,
    train_rows: Sequence[int] | np.ndarray,
    config: EncodingConfig,
    use_pca: bool = False,
) -> tuple[FittedPreprocessor, np.ndarray]:
    """
    Fit z-scoring (and PCA when `use_pca`) on train_rows and transform all rows.
    Args:
        values (np.ndarray): TRs x features.
        train_rows: Row indices used to fit the statistics.
        config (EncodingConfig): Supplies pca_components.
        use_pca (bool): Reduce to config.pca_components after z-scoring.
    Returns:
        tuple: The fitted transform and the transformed matrix.
    Raises:
        InputError: If train_rows is empty.
    """
    train_rows = np.asarray(train_rows, dtype=np.int64)
    if len(train_rows) == 0:
        raise InputError("train_rows must not be empty")

    train = values[train_rows]
    scaler = StandardScaler().fit(train)
    flagged = np.sqrt(scaler.var_) < MIN_STD
    if flagged.any():
        logger.warning(f"{int(flagged.sum())} constant feature column(s) passed through as zeros.")
    fitted = FittedPreprocessor(scaler, flagged)

    if use_pca and config.pca_components is not None:
        scaled_train = fitted.transform(train)
        n_fit = min(config.pca_components, *scaled_train.shape)
        pca = PCA(n_components=n_fit, svd_solver="full").fit(scaled_train)
        variance = pca.explained_variance_
        top = variance.max() if len(variance) else 0.0
        fitted.pca = pca
        fitted.n_components = config.pca_components
        fitted.kept_components = (variance > MIN_COMPONENT_VARIANCE * top).astype(np.float64)

    return fitted, fitted.transform(values)


def ridge_fit(x_train: np.ndarray, y_train: np.ndarray, alphas: Sequence[float]) -> RidgeFit:
    """
    Per-voxel ridge regression without intercept. For every voxel the penalty
    minimizing the efficient leave-one-out error on the training rows is kept.
    Args:
        x_train (np.ndarray): n x features.
        y_train (np.ndarray): n x voxels (a 1-D vector is one voxel).
        alphas (Sequence[float]): Candidate penalties.
    Returns:
        RidgeFit: Weights and chosen alpha per voxel.
    Raises:
        InputError: On non-finite data, mismatched rows or non-positive alphas.
    """
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    if y_train.ndim == 1:
        y_train = y_train[:, None]
    alphas = np.asarray(list(alphas), dtype=np.float64)
    if x_train.shape[0] != y_train.shape[0]:
        raise InputError(f"X has {x_train.shape[0]} rows but Y has {y_train.shape[0]}")
    if len(alphas) == 0 or np.any(alphas <= 0):
        raise InputError("alphas must be a non-empty list of positive values")
    if not (np.all(np.isfinite(x_train)) and np.all(np.isfinite(y_train))):
        raise InputError("Ridge inputs contain non-finite values")

    model = RidgeCV(alphas=alphas, fit_intercept=False, alpha_per_target=True).fit(x_train, y_train)
    weights = np.atleast_2d(model.coef_).T
    chosen = np.broadcast_to(np.asarray(model.alpha_, dtype=np.float64), (y_train.shape[1],)).copy()
    return RidgeFit(weights, chosen)
