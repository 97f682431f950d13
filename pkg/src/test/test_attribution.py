"""Tests for the token attribution methods, layer conductance and word aggregation."""

import numpy as np
import pytest
import torch

from src.attribution.aggregation import tokens_to_words, word_matrix
from src.attribution.conductance import LayerConductanceMatrix, layer_conductance, layer_importance
from src.attribution.methods import (
    attribute,
    erasure,
    erasure_words,
    gradient_norm,
    gradient_x_input,
    integrated_gradients,
    output_at,
)
from src.errors import InputError
from src.lm.model import forward, grad_wrt_embeddings, scalar_output
from src.schemas.lm_schema import TargetSpec

IDS = [3, 14, 15, 9, 26, 5, 35, 8, 9, 7]
TARGET = TargetSpec(target_token_id=12)
WINDOW = 10


def f_at(model, embeddings, target=TARGET) -> float:
    return output_at(model, torch.as_tensor(embeddings), target)


def embeddings_of(model, ids=IDS) -> np.ndarray:
    with torch.no_grad():
        return model.embed(ids).numpy().copy()


def random_window(corpus, seed: int) -> list:
    start = int(np.random.default_rng(seed).integers(len(corpus) - WINDOW))
    return corpus[start : start + WINDOW]


def predicted_target(model, ids) -> TargetSpec:
    """The token the model ranks first after the window."""
    return TargetSpec(target_token_id=int(np.argmax(forward(model, ids).logits[-1])))


def output_change(model, ids, target) -> float:
    """f(x) - f(0) for the zero-embedding baseline."""
    x = embeddings_of(model, ids)
    return f_at(model, x, target) - f_at(model, np.zeros_like(x), target)


def completeness_error(model, ids, target, steps_m: int) -> float:
    total = output_change(model, ids, target)
    result = integrated_gradients(model, ids, target, steps_m)
    return abs(result.vectors.sum() - total) / abs(total)


class TestLinearStandIn:
    """f(x) = w . x_T on the identity-block model; every method has a closed form."""

    def weights(self, model) -> np.ndarray:
        w = np.zeros((len(IDS), model.config.d_model))
        w[-1] = model.unembedding.weight[TARGET.target_token_id].detach().numpy()
        return w

    def test_gradient_norm(self, linear_model):
        scores = gradient_norm(linear_model, IDS, TARGET).scores
        np.testing.assert_allclose(scores, np.abs(self.weights(linear_model)).sum(axis=1), rtol=1e-12)

    def test_gradient_x_input(self, linear_model):
        x = embeddings_of(linear_model)
        scores = gradient_x_input(linear_model, IDS, TARGET).scores
        np.testing.assert_allclose(
            scores, np.linalg.norm(self.weights(linear_model) * x, axis=1), rtol=1e-12, atol=1e-14
        )

    @pytest.mark.parametrize("steps_m", [1, 7, 32])
    def test_integrated_gradients_is_exact_for_any_m(self, linear_model, steps_m):
        x = embeddings_of(linear_model)
        result = integrated_gradients(linear_model, IDS, TARGET, steps_m)
        np.testing.assert_allclose(result.vectors, self.weights(linear_model) * x, rtol=1e-10, atol=1e-12)

    def test_erasure(self, linear_model):
        x = embeddings_of(linear_model)
        scores = erasure(linear_model, IDS, TARGET).scores
        np.testing.assert_allclose(scores, (self.weights(linear_model) * x).sum(axis=1), rtol=1e-10, atol=1e-12)

    def test_conductance_is_conserved_exactly(self, linear_model):
        total = f_at(linear_model, embeddings_of(linear_model)) - f_at(
            linear_model, np.zeros_like(embeddings_of(linear_model))
        )
        conductance = layer_conductance(linear_model, IDS, TARGET, 8)
        np.testing.assert_allclose(conductance.scores.sum(axis=1), total, rtol=1e-10)


class TestGradientMethods:
    def test_zero_unembedding_gives_zero_scores(self, linear_model):
        with torch.no_grad():
            linear_model.unembedding.weight.zero_()
        np.testing.assert_array_equal(gradient_norm(linear_model, IDS, TARGET).scores, 0.0)

    def test_gradient_norm_is_the_l1_norm_of_the_gradient(self, toy_model):
        grads = grad_wrt_embeddings(toy_model, IDS, TARGET)
        np.testing.assert_allclose(gradient_norm(toy_model, IDS, TARGET).scores, np.abs(grads).sum(axis=1))

    def test_gradient_x_input_oracle(self, toy_model):
        grads = grad_wrt_embeddings(toy_model, IDS, TARGET)
        expected = np.sqrt(((grads * embeddings_of(toy_model)) ** 2).sum(axis=1))
        np.testing.assert_allclose(gradient_x_input(toy_model, IDS, TARGET).scores, expected, rtol=1e-12)

    @pytest.mark.parametrize("method", ["grad_norm", "grad_x_input"])
    def test_norm_scores_are_non_negative_and_finite(self, toy_model, method):
        scores = attribute(toy_model, IDS, TARGET, method).scores
        assert scores.shape == (len(IDS),)
        assert np.all(scores >= 0)
        assert np.all(np.isfinite(scores))


class TestIntegratedGradients:
    def test_input_equal_to_baseline_gives_zero(self, toy_model):
        result = integrated_gradients(toy_model, IDS, TARGET, 16, embeddings_of(toy_model))
        np.testing.assert_array_equal(result.vectors, 0.0)
        np.testing.assert_array_equal(result.scores, 0.0)

    @pytest.mark.parametrize("seed", range(10))
    def test_completeness_on_the_trained_model(self, trained_model, corpus, seed):
        ids = random_window(corpus, seed)
        target = predicted_target(trained_model, ids)
        errors = [completeness_error(trained_model, ids, target, steps_m) for steps_m in (8, 32, 256)]
        assert errors[-1] < 1e-3
        assert errors[0] >= errors[1] >= errors[2]

    def test_one_step_is_gradient_at_the_baseline_times_input(self, trained_model):
        x = embeddings_of(trained_model)
        zeros = torch.zeros(x.shape, dtype=torch.float64, requires_grad=True)
        output = scalar_output(trained_model.trace(zeros.unsqueeze(0)).logits, TARGET)
        (grads,) = torch.autograd.grad(output.sum(), zeros)
        result = integrated_gradients(trained_model, IDS, TARGET, 1)
        np.testing.assert_allclose(result.vectors, grads.numpy() * x, rtol=1e-12, atol=1e-15)

    def test_score_is_l1_norm_of_the_vector(self, toy_model):
        result = integrated_gradients(toy_model, IDS, TARGET, 16)
        np.testing.assert_allclose(result.scores, np.abs(result.vectors).sum(axis=1))
        assert result.steps_m == 16

    def test_bad_arguments(self, toy_model):
        with pytest.raises(InputError):
            integrated_gradients(toy_model, IDS, TARGET, 0)
        with pytest.raises(InputError):
            integrated_gradients(toy_model, IDS, TARGET, 4, np.zeros((3, 3)))


class TestErasure:
    @pytest.mark.parametrize("seed", range(50))
    def test_matches_a_naive_loop_bitwise(self, trained_model, corpus, seed):
        ids = random_window(corpus, 1000 + seed)
        rng = np.random.default_rng(seed)
        target_id = int(rng.integers(trained_model.config.vocab_size))
        x = torch.as_tensor(embeddings_of(trained_model, ids))
        with torch.no_grad():
            full = float(trained_model.trace(x.unsqueeze(0)).logits[0, -1, target_id])
            expected = []
            for i in range(len(ids)):
                erased = x.clone()
                erased[i] = 0.0
                expected.append(full - float(trained_model.trace(erased.unsqueeze(0)).logits[0, -1, target_id]))
        scores = erasure(trained_model, ids, TargetSpec(target_token_id=target_id)).scores
        np.testing.assert_array_equal(scores, np.array(expected))

    def test_word_erasure_removes_every_token_of_a_word(self, toy_model):
        token_word_map = [0, 0, 1, 2, 2, 3, 4, 5, 6, 7]
        x = torch.as_tensor(embeddings_of(toy_model))
        full = output_at(toy_model, x, TARGET)
        erased = x.clone()
        erased[[3, 4]] = 0.0
        scores = erasure_words(toy_model, IDS, TARGET, token_word_map)
        assert scores.shape == (8,)
        assert scores[2] == full - output_at(toy_model, erased, TARGET)

    def test_single_token_words_match_token_erasure(self, toy_model):
        np.testing.assert_array_equal(
            erasure_words(toy_model, IDS, TARGET, list(range(len(IDS)))), erasure(toy_model, IDS, TARGET).scores
        )

    def test_delete_mode(self, toy_model):
        result = erasure(toy_model, IDS, TARGET, mode="delete")
        assert result.baseline_kind == "delete"
        assert np.all(np.isfinite(result.scores))

    def test_unknown_mode(self, toy_model):
        with pytest.raises(InputError):
            erasure(toy_model, IDS, TARGET, mode="mask")


class TestLayerConductance:
    def test_shape(self, toy_model):
        conductance = layer_conductance(toy_model, IDS, TARGET, 8)
        assert conductance.scores.shape == (3, len(IDS))
        assert conductance.blocks.shape == (2, len(IDS))
        assert conductance.n_layers == 2

    @pytest.mark.parametrize("seed", range(10))
    def test_every_layer_carries_the_whole_attribution(self, trained_model, corpus, seed):
        ids = random_window(corpus, seed)
        target = predicted_target(trained_model, ids)
        total = output_change(trained_model, ids, target)
        conductance = layer_conductance(trained_model, ids, target, 256)
        np.testing.assert_allclose(conductance.scores.sum(axis=1), total, rtol=1e-2)

    def test_input_equal_to_baseline_gives_zero(self, toy_model):
        conductance = layer_conductance(toy_model, IDS, TARGET, 8, embeddings_of(toy_model))
        np.testing.assert_array_equal(conductance.scores, 0.0)

    def test_embedding_layer_equals_integrated_gradients(self, toy_model):
        conductance = layer_conductance(toy_model, IDS, TARGET, 32)
        ig = integrated_gradients(toy_model, IDS, TARGET, 32)
        np.testing.assert_allclose(conductance.scores[0], ig.vectors.sum(axis=1), rtol=1e-8, atol=1e-12)


class TestLayerImportance:
    def test_hand_filled_matrix(self):
        matrix = LayerConductanceMatrix(
            np.array(
                [
                    [9.0, 9.0, 9.0, 9.0],
                    [1.0, 2.0, 3.0, 4.0],
                    [0.0, -2.0, 2.0, 4.0],
                    [5.0, 5.0, 5.0, 1.0],
                ]
            ),
            steps_m=1,
        )
        np.testing.assert_allclose(layer_importance(matrix), [2.5, 1.0, 4.0])
        np.testing.assert_allclose(layer_importance(matrix, "sum"), [10.0, 4.0, 16.0])
        np.testing.assert_allclose(layer_importance(matrix, include_embedding=True), [9.0, 2.5, 1.0, 4.0])

    def test_single_element(self):
        assert layer_importance(np.array([0.7]))[0] == 0.7
        assert layer_importance(np.array([0.7]), "sum")[0] == 0.7

    def test_mean_and_sum_agree_on_the_best_layer(self, rng):
        values = rng.normal(size=(6, 10))
        assert np.argmax(layer_importance(values)) == np.argmax(layer_importance(values, "sum"))

    def test_empty_and_unknown_reduction(self):
        with pytest.raises(InputError):
            layer_importance(np.zeros((0,)))
        with pytest.raises(InputError):
            layer_importance(np.ones(3), "max")


class TestTokensToWords:
    def test_one_token_per_word_is_identity(self):
        words = tokens_to_words(np.array([0.1, 0.2, 0.3]), [0, 1, 2])
        assert [w.score for w in words] == [0.1, 0.2, 0.3]
        assert [w.word_index for w in words] == [0, 1, 2]

    def test_split_word_sums_its_tokens(self):
        words = tokens_to_words(np.array([0.2, 0.3, 1.0]), [0, 0, 1])
        assert words[0].score == pytest.approx(0.5)
        assert words[1].score == pytest.approx(1.0)

    def test_mapping_form_and_offset(self):
        words = tokens_to_words(np.array([1.0, 2.0, 4.0]), {0: [0], 1: [1, 2]}, word_offset=10)
        assert [(w.word_index, w.score) for w in words] == [(10, 1.0), (11, 6.0)]

    def test_sum_is_invariant_to_where_splits_fall(self, rng):
        scores = rng.normal(size=14)
        for _ in range(5):
            cuts = np.sort(rng.choice(np.arange(1, 14), size=9, replace=False))
            token_word_map = np.searchsorted(cuts, np.arange(14), side="right").tolist()
            words = tokens_to_words(scores, token_word_map)
            assert len(words) == 10
            assert sum(w.score for w in words) == pytest.approx(scores.sum())

    @pytest.mark.parametrize(
        "token_word_map",
        [[0, 2, 2], [0, 1], {0: [0, 1], 1: [1, 2]}, {0: [0], 1: [2]}],
    )
    def test_bad_maps(self, token_word_map):
        with pytest.raises(InputError):
            tokens_to_words(np.ones(3), token_word_map)

    def test_word_matrix_sums_the_last_axis(self):
        values = np.arange(8.0).reshape(2, 4)
        np.testing.assert_array_equal(word_matrix(values, [0, 1, 1, 2]), [[0, 3, 3], [4, 11, 7]])
