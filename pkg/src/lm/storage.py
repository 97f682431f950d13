"""
Model files use the shared binary container. Header fields: `config` (the
ModelConfig), `tokenizer` ({vocab, split_len} or null), `parameter_order`.
Payload blocks follow `state_dict()` order: token_embedding, positional_embedding,
then per block ln_1, attn.qkv, attn.proj, ln_2, fc_in, fc_out (weight before
bias), then ln_f (when present) and unembedding.
"""

from logging import getLogger, basicConfig
from pathlib import Path

import torch

from src.config import LOG_FORMAT, LOG_LEVEL
from src.errors import ConfigurationError
from src.lm.model import TinyLM, build_model
from src.lm.tokenizer import WordTokenizer
from src.schemas.lm_schema import ModelConfig
from utils.binary_codec import BinaryCodec, CodecError

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)

codec = BinaryCodec("model")


def save_model(model: TinyLM, path: str | Path) -> None:
    """
    Write a model (config, tokenizer and parameters) to a single binary file.
    """
    state = model.state_dict()
    header = {
        "config": model.config.model_dump(),
        "tokenizer": {"vocab": model.tokenizer.vocab, "split_len": model.tokenizer.split_len}
        if model.tokenizer
        else None,
        "parameter_order": list(state.keys()),
    }
    codec.write(path, header, {name: t.detach().cpu().numpy() for name, t in state.items()})
    logger.info(f"Saved model {model.fingerprint[:12]} to {path}")


def load_model(path: str | Path) -> TinyLM:
    """
    Read a model written by save_model.
    Raises:
        CodecError: If the file is malformed or its blocks disagree with the config.
    """
    header, blocks = codec.read(path)
    try:
        config = ModelConfig(**header["config"])
    except Exception as e:
        raise CodecError(f"Invalid model config in {path}: {e}") from e

    tokenizer = None
    if header.get("tokenizer"):
        tokenizer = WordTokenizer(header["tokenizer"]["vocab"], header["tokenizer"]["split_len"])

    try:
        model = build_model(config, tokenizer)
    except ConfigurationError as e:
        raise CodecError(str(e)) from e

    expected = model.state_dict()
    if list(blocks.keys()) != list(expected.keys()):
        raise CodecError(f"Parameter blocks in {path} do not match the architecture")
    state = {}
    for name, values in blocks.items():
        if tuple(values.shape) != tuple(expected[name].shape):
            raise CodecError(f"Block {name} has shape {values.shape}, expected {tuple(expected[name].shape)}")
        state[name] = torch.from_numpy(values.copy())
    model.load_state_dict(state)
    model.__dict__.pop("fingerprint", None)
    logger.info(f"Loaded model {model.fingerprint[:12]} from {path}")
    return model
