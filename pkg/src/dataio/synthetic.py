"""
Planted-signal BOLD generator.

Signal voxels carry a stimulus-driven response shared by all subjects: the
word features summed per TR, convolved with a double-gamma HRF, read out with
random weights and scaled to unit variance. Every voxel also gets noise of
variance 1 / snr, a shared_noise_fraction of which is common to all subjects.
"""

from logging import getLogger, basicConfig
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import gamma

from src.config import LOG_FORMAT, LOG_LEVEL
from src.dataio.bold import BoldDataset
from src.encoder.design import resample_to_tr
from src.encoder.types import BoldRun
from src.errors import DataValidationError, InputError
from src.features.types import FeatureMatrix, StoryTranscript
from src.schemas.synthetic_schema import GroundTruthManifest, HrfParams, SyntheticSpec

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)


def double_gamma_hrf(tr_s: float, params: HrfParams = HrfParams()) -> np.ndarray:
    """
    Canonical double-gamma HRF sampled every tr_s seconds over params.length_s,
    normalized to unit sum.
    """
    times = np.arange(0.0, params.length_s, tr_s)
    response = gamma.pdf(times, params.peak_s) - gamma.pdf(times, params.undershoot_s) / params.ratio
    return response / response.sum()


def convolve_columns(values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Causal convolution of every column, truncated to the input length."""
    n_rows = values.shape[0]
    return np.column_stack([np.convolve(values[:, c], kernel)[:n_rows] for c in range(values.shape[1])])


def _standardize(values: np.ndarray) -> np.ndarray:
    centered = values - values.mean(axis=0)
    std = centered.std(axis=0)
    return np.divide(centered, std, out=np.zeros_like(centered), where=std > 0)


def generate_synthetic(
    spec: SyntheticSpec,
    features: FeatureMatrix,
    transcript: StoryTranscript,
) -> Tuple[BoldDataset, GroundTruthManifest]:
    """
    Generate a multi-subject dataset with known signal voxels.
    Args:
        spec (SyntheticSpec): Dataset geometry, SNR, noise sharing and seed.
        features (FeatureMatrix): Generating feature space, aligned to the transcript.
        transcript (StoryTranscript): Word timing.
    Returns:
        Tuple[BoldDataset, GroundTruthManifest]: The runs and what was planted.
    Raises:
        DataValidationError: If snr is not positive.
        InputError: If the features do not fit the transcript or the run.
    """
    if spec.snr <= 0:
        raise DataValidationError(f"snr must be positive, got {spec.snr}")
    if features.story_id != transcript.story_id:
        raise InputError(
            f"Features belong to story '{features.story_id}', transcript is '{transcript.story_id}'"
        )
    logger.info(
        f"Generating synthetic BOLD: {spec.n_subjects} subjects, {spec.n_voxels} voxels, "
        f"{spec.n_trs} TRs, snr={spec.snr}, signal fraction={spec.signal_voxel_fraction}."
    )
    rng = np.random.default_rng(spec.seed)

    n_signal = int(round(spec.signal_voxel_fraction * spec.n_voxels))
    signal_ids = np.sort(rng.choice(spec.n_voxels, size=n_signal, replace=False))
    weights = rng.standard_normal((features.values.shape[1], n_signal))

    stimulus = resample_to_tr(features, transcript, spec.n_trs, spec.tr_s).values
    response = convolve_columns(stimulus, double_gamma_hrf(spec.tr_s, spec.hrf))
    signal = np.zeros((spec.n_voxels, spec.n_trs))
    signal[signal_ids] = _standardize(response @ weights).T

    noise_scale = np.sqrt(1.0 / spec.snr)
    shared = rng.standard_normal((spec.n_voxels, spec.n_trs))
    runs = []
    for subject in range(spec.n_subjects):
        own = rng.standard_normal((spec.n_voxels, spec.n_trs))
        noise = np.sqrt(spec.shared_noise_fraction) * shared + np.sqrt(1.0 - spec.shared_noise_fraction) * own
        runs.append(
            BoldRun(signal + noise_scale * noise, f"sub-{subject + 1:02d}", transcript.story_id, spec.tr_s)
        )

    manifest = GroundTruthManifest(
        signal_voxel_ids=[int(v) for v in signal_ids],
        weights={str(int(v)): weights[:, i].tolist() for i, v in enumerate(signal_ids)},
        feature_label=features.label,
        n_voxels=spec.n_voxels,
    )
    return BoldDataset(runs, transcript.story_id, spec.tr_s, manifest), manifest


def generate_layer_groups(
    spec: SyntheticSpec,
    layer_features: Dict[int, FeatureMatrix],
    transcript: StoryTranscript,
    group_sizes: Optional[Sequence[int]] = None,
) -> Tuple[BoldDataset, GroundTruthManifest]:
    """
    Split the voxels into one contiguous group per layer and generate each group
    from that layer's features. planted_layers maps every signal voxel to the
    layer that produced it.
    Args:
        spec (SyntheticSpec): Whole-dataset geometry; every group shares its SNR and signal fraction.
        layer_features (Dict[int, FeatureMatrix]): Generating features per layer label.
        transcript (StoryTranscript): Word timing.
        group_sizes (Optional[Sequence[int]]): Voxels per layer in ascending layer
            order. Near-equal groups when omitted.
    Raises:
        InputError: If a group would be empty or the sizes do not add up to n_voxels.
    """
    if not layer_features:
        raise InputError("At least one layer is required")
    layers = sorted(layer_features)
    if group_sizes is None:
        sizes = [len(block) for block in np.array_split(np.arange(spec.n_voxels), len(layers))]
    else:
        sizes = [int(size) for size in group_sizes]
        if len(sizes) != len(layers) or sum(sizes) != spec.n_voxels:
            raise InputError(
                f"group_sizes {sizes} must give one group per layer ({len(layers)}) "
                f"and add up to {spec.n_voxels} voxels"
            )
    if min(sizes) <= 0:
        raise InputError(f"{spec.n_voxels} voxels cannot be split into non-empty groups {sizes}")

    groups, offset = [], 0
    signal_ids: List[int] = []
    weights: Dict[str, List[float]] = {}
    planted: Dict[str, int] = {}
    for position, (layer, size) in enumerate(zip(layers, sizes)):
        group_spec = spec.model_copy(update={"n_voxels": size, "seed": spec.seed + position})
        dataset, truth = generate_synthetic(group_spec, layer_features[layer], transcript)
        groups.append(dataset)
        for voxel in truth.signal_voxel_ids:
            signal_ids.append(voxel + offset)
            weights[str(voxel + offset)] = truth.weights[str(voxel)]
            planted[str(voxel + offset)] = layer
        offset += size

    runs = [
        BoldRun(
            np.vstack([group.runs[s].values for group in groups]),
            groups[0].runs[s].subject_id,
            transcript.story_id,
            spec.tr_s,
        )
        for s in range(spec.n_subjects)
    ]
    manifest = GroundTruthManifest(
        signal_voxel_ids=signal_ids,
        weights=weights,
        feature_label="conductance:layers",
        n_voxels=spec.n_voxels,
        planted_layers=planted,
    )
    return BoldDataset(runs, transcript.story_id, spec.tr_s, manifest), manifest
