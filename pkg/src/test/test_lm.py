"""Tests for the toy transformer, its gradients, training and model files."""

import numpy as np
import pytest
import torch

from src.errors import ConfigurationError, InputError
from src.lm.model import (
    build_model,
    forward,
    grad_wrt_embeddings,
    grad_wrt_layer,
    parameter_count,
    scalar_output,
    target_scalar,
)
from src.lm.storage import load_model, save_model
from src.lm.tokenizer import WordTokenizer
from src.lm.training import corpus_loss, train
from src.schemas.lm_schema import ModelConfig, TargetSpec
from src.test.conftest import toy_config
from utils.binary_codec import CodecError

FD_STEP = 1e-4


def output_from_layer(model, hidden: torch.Tensor, layer: int, target: TargetSpec) -> float:
    """f recomputed from hidden_states[layer] by running the remaining blocks."""
    with torch.no_grad():
        h = hidden.unsqueeze(0)
        for block in model.blocks[layer:]:
            h, _ = block(h)
        logits = model.unembedding(model.ln_f(h))
        return float(scalar_output(logits, target)[0])


def central_differences(model, start: torch.Tensor, layer: int, target: TargetSpec, coords) -> np.ndarray:
    values = []
    for t, d in coords:
        plus, minus = start.clone(), start.clone()
        plus[t, d] += FD_STEP
        minus[t, d] -= FD_STEP
        values.append(
            (output_from_layer(model, plus, layer, target) - output_from_layer(model, minus, layer, target))
            / (2 * FD_STEP)
        )
    return np.array(values)


def random_coords(rng, n_tokens: int, d_model: int, count: int = 20):
    return [(int(rng.integers(n_tokens)), int(rng.integers(d_model))) for _ in range(count)]


class TestBuildModel:
    def test_parameter_count_matches_closed_form(self):
        config = ModelConfig(n_layers=2, n_heads=2, d_model=16, d_ff=32, vocab_size=64, max_seq_len=16)
        model = build_model(config)
        d, ff, vocab, seq = 16, 32, 64, 16
        embeddings = vocab * d + seq * d
        block = (2 * d) + (d * 3 * d + 3 * d) + (d * d + d) + (2 * d) + (d * ff + ff) + (ff * d + d)
        expected = embeddings + 2 * block + 2 * d + d * vocab
        assert expected == 6784
        assert parameter_count(config) == expected
        assert sum(p.numel() for p in model.parameters()) == expected

    def test_same_seed_is_bitwise_identical(self, tokenizer):
        a = build_model(toy_config(tokenizer), tokenizer)
        b = build_model(toy_config(tokenizer), tokenizer)
        for (name, pa), (_, pb) in zip(a.state_dict().items(), b.state_dict().items()):
            assert torch.equal(pa, pb), name
        assert a.fingerprint == b.fingerprint

    def test_every_layer_norm_uses_the_configured_eps(self, tokenizer):
        assert toy_config(tokenizer).norm_eps == 64.0
        model = build_model(toy_config(tokenizer, norm_eps=0.5), tokenizer)
        norms = [m for m in model.modules() if isinstance(m, torch.nn.LayerNorm)]
        assert len(norms) == 2 * model.config.n_layers + 1
        assert all(norm.eps == 0.5 for norm in norms)

    def test_zero_input_path_is_smooth_near_the_origin(self, toy_model):
        """f along alpha * x stays close to its chord from 0 to a small alpha."""
        with torch.no_grad():
            x = toy_model.embed([3, 14, 15, 9, 26])
        target = TargetSpec(target_token_id=7)
        values = [
            float(scalar_output(toy_model.trace((alpha * x).unsqueeze(0)).logits, target)[0])
            for alpha in (0.0, 0.005, 0.01)
        ]
        assert abs(values[1] - (values[0] + values[2]) / 2) < 1e-3 * abs(values[2] - values[0]) + 1e-12

    def test_heads_must_divide_width(self):
        with pytest.raises(ConfigurationError):
            build_model({"n_layers": 1, "n_heads": 3, "d_model": 16, "d_ff": 8, "vocab_size": 10, "max_seq_len": 16})

    def test_max_seq_len_holds_an_attention_window(self):
        with pytest.raises(ConfigurationError):
            build_model({"n_layers": 1, "n_heads": 2, "d_model": 16, "d_ff": 8, "vocab_size": 10, "max_seq_len": 10})

    def test_tokenizer_larger_than_vocab_is_rejected(self, tokenizer):
        with pytest.raises(ConfigurationError):
            build_model(toy_config(tokenizer, vocab_size=5), tokenizer)


class TestForward:
    def test_single_token_attention_is_one(self, toy_model):
        record = forward(toy_model, [3])
        assert record.attention_maps.shape == (2, 2, 1, 1)
        np.testing.assert_array_equal(record.attention_maps, 1.0)

    def test_attention_rows_are_causal_distributions(self, toy_model, rng):
        ids = rng.integers(0, toy_model.config.vocab_size, size=12).tolist()
        maps = forward(toy_model, ids).attention_maps
        np.testing.assert_allclose(maps.sum(axis=-1), 1.0, atol=1e-6)
        assert np.all(maps >= 0)
        future = np.triu(np.ones((12, 12), dtype=bool), k=1)
        assert np.all(maps[..., future] == 0)

    def test_shapes(self, toy_model):
        record = forward(toy_model, list(range(1, 8)))
        assert record.hidden_states.shape == (3, 7, 16)
        assert record.logits.shape == (7, toy_model.config.vocab_size)

    def test_hidden_state_zero_is_the_embedding(self, toy_model):
        ids = [4, 9, 2]
        record = forward(toy_model, ids)
        with torch.no_grad():
            expected = toy_model.embed(ids).numpy()
        np.testing.assert_array_equal(record.hidden_states[0], expected)

    def test_forward_is_pure(self, toy_model):
        a = forward(toy_model, [5, 6, 7, 8])
        b = forward(toy_model, [5, 6, 7, 8])
        np.testing.assert_array_equal(a.logits, b.logits)
        np.testing.assert_array_equal(a.hidden_states, b.hidden_states)

    @pytest.mark.parametrize("ids", [[], [10_000], [-1]])
    def test_invalid_input(self, toy_model, ids):
        with pytest.raises(InputError):
            forward(toy_model, ids)

    def test_too_long_input(self, toy_model):
        with pytest.raises(InputError):
            forward(toy_model, [1] * (toy_model.config.max_seq_len + 1))


class TestTargetScalar:
    def test_log_prob_is_not_positive(self, toy_model):
        record = forward(toy_model, [1, 2, 3])
        assert target_scalar(record, TargetSpec(target_token_id=4, kind="log_prob")) <= 0

    def test_log_probs_sum_to_one(self, toy_model):
        record = forward(toy_model, [1, 2, 3])
        total = sum(
            np.exp(target_scalar(record, TargetSpec(target_token_id=v, kind="log_prob")))
            for v in range(toy_model.config.vocab_size)
        )
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_zero_unembedding_gives_zero_logit(self, tokenizer):
        model = build_model(toy_config(tokenizer), tokenizer)
        with torch.no_grad():
            model.unembedding.weight.zero_()
        record = forward(model, [1, 2, 3])
        assert target_scalar(record, TargetSpec(target_token_id=7)) == 0.0


class TestGradients:
    def test_embedding_gradient_matches_finite_differences(self, toy_model, rng):
        ids = [3, 14, 15, 9, 26, 5]
        target = TargetSpec(target_token_id=7)
        grads = grad_wrt_embeddings(toy_model, ids, target)
        with torch.no_grad():
            start = toy_model.embed(ids)
        coords = random_coords(rng, len(ids), toy_model.config.d_model)
        numeric = central_differences(toy_model, start, 0, target, coords)
        analytic = np.array([grads[t, d] for t, d in coords])
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)

    def test_log_prob_gradient_matches_finite_differences(self, toy_model, rng):
        ids = [2, 7, 1, 8]
        target = TargetSpec(target_token_id=11, kind="log_prob")
        grads = grad_wrt_embeddings(toy_model, ids, target)
        with torch.no_grad():
            start = toy_model.embed(ids)
        coords = random_coords(rng, len(ids), toy_model.config.d_model)
        numeric = central_differences(toy_model, start, 0, target, coords)
        np.testing.assert_allclose([grads[t, d] for t, d in coords], numeric, rtol=1e-4, atol=1e-6)

    def test_layer_gradient_matches_finite_differences(self, toy_model, rng):
        ids = [3, 1, 4, 1, 5, 9]
        target = TargetSpec(target_token_id=2)
        record = forward(toy_model, ids)
        start = torch.from_numpy(record.hidden_states[1].copy())
        grads = grad_wrt_layer(toy_model, ids, target, 1)
        coords = random_coords(rng, len(ids), toy_model.config.d_model)
        numeric = central_differences(toy_model, start, 1, target, coords)
        np.testing.assert_allclose([grads[t, d] for t, d in coords], numeric, rtol=1e-4, atol=1e-6)

    @pytest.mark.parametrize("window", range(10))
    def test_embedding_gradient_on_random_windows(self, trained_model, corpus, window):
        rng = np.random.default_rng(100 + window)
        start = int(rng.integers(len(corpus) - 10))
        ids = corpus[start : start + 10]
        target = TargetSpec(target_token_id=int(rng.integers(trained_model.config.vocab_size)))
        grads = grad_wrt_embeddings(trained_model, ids, target)
        with torch.no_grad():
            embeddings = trained_model.embed(ids)
        coords = random_coords(rng, len(ids), trained_model.config.d_model)
        numeric = central_differences(trained_model, embeddings, 0, target, coords)
        analytic = np.array([grads[t, d] for t, d in coords])
        # near-zero components are compared against 1% of the largest one
        scale = np.maximum(np.abs(numeric), 1e-2 * np.abs(numeric).max())
        assert np.max(np.abs(analytic - numeric) / scale) < 1e-4

    def test_linear_head_gradient_is_the_unembedding_column(self, tokenizer):
        model = build_model(toy_config(tokenizer, final_norm=False), tokenizer)
        ids = [5, 6, 7, 8, 9]
        grads = grad_wrt_layer(model, ids, TargetSpec(target_token_id=12), model.config.n_layers)
        expected = model.unembedding.weight[12].detach().numpy()
        np.testing.assert_allclose(grads[-1], expected, rtol=1e-12)
        np.testing.assert_array_equal(grads[:-1], 0.0)

    def test_layer_zero_is_the_embedding_gradient(self, toy_model):
        ids = [1, 2, 3, 4]
        target = TargetSpec(target_token_id=5)
        np.testing.assert_array_equal(
            grad_wrt_layer(toy_model, ids, target, 0), grad_wrt_embeddings(toy_model, ids, target)
        )

    def test_gradients_are_pure(self, toy_model):
        ids = [9, 8, 7]
        target = TargetSpec(target_token_id=1)
        np.testing.assert_array_equal(
            grad_wrt_embeddings(toy_model, ids, target), grad_wrt_embeddings(toy_model, ids, target)
        )

    def test_gradient_shape_follows_input(self, toy_model):
        assert grad_wrt_embeddings(toy_model, [1, 2, 3], TargetSpec(target_token_id=0)).shape == (3, 16)

    @pytest.mark.parametrize("layer", [-1, 3])
    def test_layer_out_of_range(self, toy_model, layer):
        with pytest.raises(InputError):
            grad_wrt_layer(toy_model, [1, 2], TargetSpec(target_token_id=0), layer)

    def test_target_out_of_range(self, toy_model):
        with pytest.raises(InputError):
            grad_wrt_embeddings(toy_model, [1, 2], TargetSpec(target_token_id=10_000))


class TestTraining:
    def test_zero_steps_leaves_the_model_unchanged(self, toy_model, corpus):
        trained = train(toy_model, corpus, 0, 0.05, 0)
        assert trained is not toy_model
        assert trained.fingerprint == toy_model.fingerprint

    def test_loss_decreases(self, toy_model, corpus):
        before = corpus_loss(toy_model, corpus)
        trained = train(toy_model, corpus, 200, 0.05, 0)
        assert corpus_loss(trained, corpus) < before

    def test_training_does_not_touch_the_input_model(self, tokenizer, corpus):
        model = build_model(toy_config(tokenizer), tokenizer)
        fingerprint = model.fingerprint
        train(model, corpus, 5, 0.05, 0)
        model.__dict__.pop("fingerprint", None)
        assert model.fingerprint == fingerprint

    def test_same_seed_gives_identical_parameters(self, toy_model, corpus):
        a = train(toy_model, corpus, 20, 0.05, 7)
        b = train(toy_model, corpus, 20, 0.05, 7)
        assert a.fingerprint == b.fingerprint

    def test_short_corpus_is_rejected(self, toy_model):
        with pytest.raises(InputError):
            train(toy_model, [1], 10, 0.05, 0)


class TestTokenizer:
    def test_long_words_split_in_two(self):
        tokenizer = WordTokenizer.build(["extraordinary", "man"], split_len=8)
        ids, token_word_map = tokenizer.encode_words(["man", "extraordinary"])
        assert len(ids) == 3
        assert token_word_map == [0, 1, 1]

    def test_unknown_words_map_to_unk(self):
        tokenizer = WordTokenizer.build(["man"])
        assert tokenizer.encode_corpus(["woman"]) == [0]


class TestModelFiles:
    def test_round_trip(self, toy_model, tmp_path):
        path = tmp_path / "model.bin"
        save_model(toy_model, path)
        loaded = load_model(path)
        assert loaded.fingerprint == toy_model.fingerprint
        assert loaded.config == toy_model.config
        assert loaded.tokenizer.vocab == toy_model.tokenizer.vocab
        np.testing.assert_array_equal(forward(loaded, [1, 2, 3]).logits, forward(toy_model, [1, 2, 3]).logits)

    def test_truncated_file_is_rejected(self, toy_model, tmp_path):
        path = tmp_path / "model.bin"
        save_model(toy_model, path)
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(CodecError):
            load_model(path)

    def test_wrong_kind_is_rejected(self, tmp_path):
        path = tmp_path / "not_a_model.bin"
        path.write_bytes(b"JUNKJUNKJUNK")
        with pytest.raises(CodecError):
            load_model(path)
