import numpy as np
import pytest
import torch

from src.dataio.transcripts import STORY_WORDS, generate_transcript
from src.lm.model import build_model
from src.lm.tokenizer import WordTokenizer
from src.lm.training import train
from src.schemas.lm_schema import ModelConfig
from src.utils.cache import clear_caches

SHORT_WORDS = [w for w in STORY_WORDS if len(w) <= 8]


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end runs that take more than a few seconds")


@pytest.fixture(autouse=True)
def fresh_caches():
    clear_caches()
    yield
    clear_caches()


@pytest.fixture(scope="session")
def tokenizer():
    return WordTokenizer.build(STORY_WORDS)


def toy_config(tokenizer, **overrides) -> ModelConfig:
    values = {
        "n_layers": 2,
        "n_heads": 2,
        "d_model": 16,
        "d_ff": 32,
        "vocab_size": len(tokenizer),
        "max_seq_len": 32,
        "seed": 0,
    }
    values.update(overrides)
    return ModelConfig(**values)


@pytest.fixture(scope="session")
def toy_model(tokenizer):
    return build_model(toy_config(tokenizer), tokenizer)


@pytest.fixture(scope="session")
def corpus(tokenizer):
    return tokenizer.encode_corpus(generate_transcript(200, 100, seed=1).texts)


@pytest.fixture(scope="session")
def trained_model(toy_model, corpus):
    """The toy model after 300 SGD steps on a generated 200-word story."""
    return train(toy_model, corpus, 300, 0.05, 0)


@pytest.fixture
def linear_model(tokenizer):
    """
    Blocks reduced to the identity and no final norm, so
    f(x) = unembedding[target] . x_T: linear in the last position's embedding.
    """
    model = build_model(toy_config(tokenizer, final_norm=False, seed=3), tokenizer)
    with torch.no_grad():
        for name, param in model.named_parameters():
            if name.startswith("blocks") and ("attn" in name or "fc_" in name):
                param.zero_()
    model.__dict__.pop("fingerprint", None)
    return model


@pytest.fixture(scope="session")
def story():
    """23 words: three retained rows at window_len=10."""
    return generate_transcript(23, 20, seed=4, story_id="story")


@pytest.fixture(scope="session")
def short_word_story():
    """Every word is a single token."""
    return generate_transcript(14, 12, seed=2, vocabulary=SHORT_WORDS, story_id="short")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def token_ids(tokenizer, words):
    return tokenizer.encode_words(words)[0]
