"""End-to-end checks on planted-signal datasets: generator, encoder and group statistics together."""

import numpy as np
import pytest

from src.cli.stages import planted_layer_recovery
from src.dataio.synthetic import generate_layer_groups, generate_synthetic
from src.dataio.transcripts import generate_transcript
from src.encoder.scoring import brain_score_cv
from src.features.builders import attribution_features
from src.features.types import FeatureMatrix
from src.schemas.encoder_schema import EncodingConfig
from src.schemas.synthetic_schema import SyntheticSpec
from src.stats.ceiling import isc_noise_ceiling
from src.stats.compare import voxel_significance
from src.stats.layers import importance_alignment, layer_distributions, layer_preference

N_TRS = 300
CONFIG = EncodingConfig()


@pytest.fixture(scope="module")
def planted_story():
    """One word per TR."""
    return generate_transcript(N_TRS, N_TRS, seed=5, story_id="planted")


def random_features(story, columns: int, seed: int, layer: int = 1) -> FeatureMatrix:
    values = np.random.default_rng(seed).normal(size=(len(story), columns))
    return FeatureMatrix(values, "conductance", np.arange(len(story)), story.story_id, {"layer": layer})


def subject_scores(features, story, dataset) -> np.ndarray:
    """subjects x voxels cross-validated brain scores."""
    return np.stack([brain_score_cv(features, story, run, CONFIG).scores for run in dataset.runs])


class TestGeneratorAndEncoder:
    def test_near_noiseless_signal_voxels_score_high(self, planted_story):
        features = random_features(planted_story, 3, seed=0)
        spec = SyntheticSpec(n_subjects=1, n_voxels=20, n_trs=N_TRS, signal_voxel_fraction=0.5, snr=1e6)
        dataset, truth = generate_synthetic(spec, features, planted_story)
        scores = brain_score_cv(features, planted_story, dataset.runs[0], CONFIG).scores
        assert np.all(scores[truth.signal_voxel_ids] > 0.95)

    def test_no_signal_voxels_score_zero_on_average(self, planted_story):
        features = random_features(planted_story, 3, seed=1)
        spec = SyntheticSpec(n_subjects=1, n_voxels=1000, n_trs=N_TRS, signal_voxel_fraction=0.0, seed=3)
        dataset, truth = generate_synthetic(spec, features, planted_story)
        assert truth.signal_voxel_ids == []
        scores = brain_score_cv(features, planted_story, dataset.runs[0], CONFIG).scores
        assert abs(scores.mean()) < 0.02

    def test_ceiling_rises_with_the_snr(self, planted_story):
        features = random_features(planted_story, 3, seed=2)
        ceilings = []
        for snr in (0.25, 1.0, 4.0, 16.0):
            spec = SyntheticSpec(n_subjects=8, n_voxels=50, n_trs=N_TRS, signal_voxel_fraction=1.0, snr=snr)
            dataset, _ = generate_synthetic(spec, features, planted_story)
            ceilings.append(isc_noise_ceiling(dataset.as_array()).ceiling.mean())
        assert np.all(np.diff(ceilings) > 0)


@pytest.mark.slow
class TestPlantedRecovery:
    def test_gradient_norm_voxels_are_found_with_controlled_fdr(self, trained_model, planted_story):
        features = attribution_features(planted_story, trained_model, "grad_norm")
        sensitivities, proportions = [], []
        for seed in range(3):
            spec = SyntheticSpec(
                n_subjects=20, n_voxels=1000, n_trs=N_TRS, signal_voxel_fraction=0.1, snr=1.0, seed=seed
            )
            dataset, truth = generate_synthetic(spec, features, planted_story)
            mask = voxel_significance(subject_scores(features, planted_story, dataset), q=0.05).mask
            planted = np.zeros(spec.n_voxels, dtype=bool)
            planted[truth.signal_voxel_ids] = True
            sensitivities.append((mask & planted).sum() / planted.sum())
            proportions.append((mask & ~planted).sum() / max(1, mask.sum()))
        assert min(sensitivities) >= 0.9
        # false discovery proportions averaged over independent datasets
        assert np.mean(proportions) <= 0.07

    def test_layer_groups_are_assigned_to_their_layers(self, planted_story):
        layers = [1, 2, 3, 4]
        group_sizes = [100, 200, 300, 400]
        layer_features = {layer: random_features(planted_story, 5, seed=10 + layer, layer=layer) for layer in layers}
        spec = SyntheticSpec(n_subjects=10, n_voxels=1000, n_trs=N_TRS, signal_voxel_fraction=0.5, snr=1.0)
        dataset, _ = generate_layer_groups(spec, layer_features, planted_story, group_sizes=group_sizes)

        per_layer = np.stack([subject_scores(layer_features[layer], planted_story, dataset) for layer in layers])
        mask = np.zeros(spec.n_voxels, dtype=bool)
        for scores in per_layer:
            mask |= voxel_significance(scores, q=0.05).mask
        preference = layer_preference(per_layer.mean(axis=1), mask, layers)

        recovery = planted_layer_recovery(dataset, preference.preferred)
        assert all(recovery[str(layer)] >= 0.8 for layer in layers)

        planted_words = np.repeat(layers, [size // 10 for size in group_sizes])
        alignment = importance_alignment(layer_distributions(preference, planted_words, layers))
        assert not alignment.undefined
        assert alignment.r > 0.8
