"""
Toy decoder-only transformer.

Block layout (pre-normalization, GPT-2 family):

    h_0 = token_embedding[ids] + positional_embedding[:T]
    a   = CausalSelfAttention(LayerNorm_1(h_{l-1}))
    u   = h_{l-1} + a
    h_l = u + W_2 GELU(W_1 LayerNorm_2(u) + b_1) + b_2
    logits = LayerNorm_f(h_L) @ unembedding          (LayerNorm_f optional)

hidden_states[0] is h_0 and hidden_states[l] is the output of block l.
All parameters and activations are float64. Every LayerNorm uses config.norm_eps,
which defaults to a value much larger than the embedding variance.
"""

from dataclasses import dataclass
from functools import cached_property
from hashlib import sha256
from logging import getLogger, basicConfig
from math import sqrt
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import ValidationError
from scipy.special import logsumexp

from src.config import LOG_FORMAT, LOG_LEVEL
from src.errors import ConfigurationError, InputError
from src.lm.tokenizer import WordTokenizer
from src.schemas.lm_schema import ModelConfig, TargetSpec

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)

DTYPE = torch.float64


class Trace(NamedTuple):
    """Differentiable outputs of one batched pass."""

    logits: torch.Tensor
    hidden_states: List[torch.Tensor]
    attention_maps: List[torch.Tensor]


@dataclass(frozen=True)
class ForwardRecord:
    """
    logits: T x vocab_size; hidden_states: (n_layers + 1) x T x d_model;
    attention_maps: n_layers x n_heads x T x T.
    """

    logits: np.ndarray
    hidden_states: np.ndarray
    attention_maps: np.ndarray


class CausalSelfAttention(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.n_heads = config.n_heads
        self.d_model = config.d_model
        self.head_dim = config.d_model // config.n_heads
        self.qkv = nn.Linear(config.d_model, 3 * config.d_model)
        self.proj = nn.Linear(config.d_model, config.d_model)

    def forward(self, x: torch.Tensor):
        batch, steps, _ = x.shape
        q, k, v = self.qkv(x).split(self.d_model, dim=-1)
        q = q.view(batch, steps, self.n_heads, self.head_dim).transpose(1, 2)
        k = k.view(batch, steps, self.n_heads, self.head_dim).transpose(1, 2)
        v = v.view(batch, steps, self.n_heads, self.head_dim).transpose(1, 2)

        scores = q @ k.transpose(-2, -1) / sqrt(self.head_dim)
        future = torch.ones(steps, steps, dtype=torch.bool, device=x.device).triu(1)
        scores = scores.masked_fill(future, float("-inf"))
        weights = torch.softmax(scores, dim=-1)

        out = (weights @ v).transpose(1, 2).reshape(batch, steps, self.d_model)
        return self.proj(out), weights


class Block(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.ln_1 = nn.LayerNorm(config.d_model, eps=config.norm_eps)
        self.attn = CausalSelfAttention(config)
        self.ln_2 = nn.LayerNorm(config.d_model, eps=config.norm_eps)
        self.fc_in = nn.Linear(config.d_model, config.d_ff)
        self.fc_out = nn.Linear(config.d_ff, config.d_model)

    def forward(self, x: torch.Tensor):
        attended, weights = self.attn(self.ln_1(x))
        x = x + attended
        x = x + self.fc_out(F.gelu(self.fc_in(self.ln_2(x))))
        return x, weights


class TinyLM(nn.Module):
    """
    The toy language model. Treat instances as immutable once built or trained;
    `train` returns a new instance.
    """

    def __init__(self, config: ModelConfig, tokenizer: Optional[WordTokenizer] = None):
        super().__init__()
        self.config = config
        self.tokenizer = tokenizer
        self.token_embedding = nn.Embedding(config.vocab_size, config.d_model)
        self.positional_embedding = nn.Embedding(config.max_seq_len, config.d_model)
        self.blocks = nn.ModuleList([Block(config) for _ in range(config.n_layers)])
        self.ln_f = nn.LayerNorm(config.d_model, eps=config.norm_eps) if config.final_norm else nn.Identity()
        self.unembedding = nn.Linear(config.d_model, config.vocab_size, bias=False)

    @cached_property
    def fingerprint(self) -> str:
        digest = sha256()
        for name, tensor in self.state_dict().items():
            digest.update(name.encode("utf-8"))
            digest.update(tensor.detach().cpu().numpy().astype("<f8").tobytes())
        return digest.hexdigest()

    def check_ids(self, token_ids: Sequence[int]) -> torch.Tensor:
        if len(token_ids) == 0:
            raise InputError("Token sequence is empty")
        if len(token_ids) > self.config.max_seq_len:
            raise InputError(
                f"Sequence length {len(token_ids)} exceeds max_seq_len {self.config.max_seq_len}"
            )
        ids = torch.as_tensor(list(token_ids), dtype=torch.long)
        if int(ids.min()) < 0 or int(ids.max()) >= self.config.vocab_size:
            raise InputError(f"Token id out of range [0, {self.config.vocab_size})")
        return ids

    def embed(self, token_ids: Sequence[int]) -> torch.Tensor:
        """Summed token + positional embeddings, T x d_model."""
        ids = self.check_ids(token_ids)
        positions = torch.arange(len(ids))
        return self.token_embedding(ids) + self.positional_embedding(positions)

    def trace(self, embeddings: torch.Tensor) -> Trace:
        """
        Run the blocks on a batch of embedding sequences (B x T x d_model).
        """
        hidden = embeddings
        hidden_states = [hidden]
        attention_maps = []
        for block in self.blocks:
            hidden, weights = block(hidden)
            hidden_states.append(hidden)
            attention_maps.append(weights)
        logits = self.unembedding(self.ln_f(hidden))
        return Trace(logits, hidden_states, attention_maps)


def parameter_count(config: ModelConfig) -> int:
    """Closed-form parameter count of the architecture above."""
    d, ff, vocab = config.d_model, config.d_ff, config.vocab_size
    per_block = 4 * d * d + 2 * d * ff + 9 * d + ff
    final_norm = 2 * d if config.final_norm else 0
    return vocab * d + config.max_seq_len * d + config.n_layers * per_block + final_norm + d * vocab


def build_model(config: ModelConfig | dict, tokenizer: Optional[WordTokenizer] = None) -> TinyLM:
    """
    Build a model with a deterministic initialization drawn from config.seed.
    Args:
        config (ModelConfig | dict): Architecture; dicts are validated.
        tokenizer (Optional[WordTokenizer]): Vocabulary carried with the model.
    Returns:
        TinyLM: A float64 model.
    Raises:
        ConfigurationError: If the configuration is invalid.
    """
    if not isinstance(config, ModelConfig):
        try:
            config = ModelConfig(**config)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid model config: {e}") from e
    if tokenizer is not None and len(tokenizer) > config.vocab_size:
        raise ConfigurationError(
            f"Tokenizer has {len(tokenizer)} tokens but vocab_size is {config.vocab_size}"
        )

    model = TinyLM(config, tokenizer).to(DTYPE)
    generator = torch.Generator().manual_seed(config.seed)
    with torch.no_grad():
        for name, param in model.named_parameters():
            if name.startswith("token_embedding"):
                param.copy_(torch.randn(param.shape, generator=generator, dtype=DTYPE))
            elif name.startswith("positional_embedding"):
                param.copy_(0.5 * torch.randn(param.shape, generator=generator, dtype=DTYPE))
            elif "ln" in name:
                param.fill_(1.0 if name.endswith("weight") else 0.0)
            elif name.endswith("bias"):
                param.zero_()
            else:
                std = param.shape[1] ** -0.5
                param.copy_(std * torch.randn(param.shape, generator=generator, dtype=DTYPE))
    model.eval()

    logger.info(
        f"Built model: {config.n_layers} layers, {config.n_heads} heads, d_model={config.d_model}, "
        f"{sum(p.numel() for p in model.parameters())} parameters."
    )
    return model


def forward(model: TinyLM, token_ids: Sequence[int]) -> ForwardRecord:
    """
    Evaluate the model on one token sequence.
    Raises:
        InputError: On an empty sequence or an out-of-range id.
    """
    with torch.no_grad():
        trace = model.trace(model.embed(token_ids).unsqueeze(0))
    return ForwardRecord(
        logits=trace.logits[0].numpy().copy(),
        hidden_states=torch.stack([h[0] for h in trace.hidden_states]).numpy().copy(),
        attention_maps=torch.stack([w[0] for w in trace.attention_maps]).numpy().copy()
        if trace.attention_maps
        else np.zeros((0, model.config.n_heads, len(token_ids), len(token_ids))),
    )


def check_target(model: TinyLM, target: TargetSpec) -> None:
    if target.target_token_id >= model.config.vocab_size:
        raise InputError(
            f"target_token_id {target.target_token_id} out of range for vocab_size {model.config.vocab_size}"
        )


def scalar_output(logits: torch.Tensor, target: TargetSpec) -> torch.Tensor:
    """
    Differentiable f(x) per batch element from B x T x vocab logits.
    """
    last = logits[:, -1, :]
    if target.kind == "log_prob":
        last = torch.log_softmax(last, dim=-1)
    return last[:, target.target_token_id]


def target_scalar(record: ForwardRecord, target: TargetSpec) -> float:
    """
    f(x): the final-position logit or log-probability of the target token.
    """
    last = record.logits[-1]
    if target.target_token_id >= last.shape[0]:
        raise InputError(f"target_token_id {target.target_token_id} out of range")
    if target.kind == "log_prob":
        return float(last[target.target_token_id] - logsumexp(last))
    return float(last[target.target_token_id])


def grad_wrt_embeddings(model: TinyLM, token_ids: Sequence[int], target: TargetSpec) -> np.ndarray:
    """
    Reverse-mode gradient of f(x) with respect to the summed token + positional
    embedding of every position (T x d_model).
    """
    check_target(model, target)
    embeddings = model.embed(token_ids).detach().requires_grad_(True)
    trace = model.trace(embeddings.unsqueeze(0))
    (grad,) = torch.autograd.grad(scalar_output(trace.logits, target).sum(), embeddings)
    return grad.numpy().copy()


def grad_wrt_layer(model: TinyLM, token_ids: Sequence[int], target: TargetSpec, layer: int) -> np.ndarray:
    """
    Reverse-mode gradient of f(x) with respect to hidden_states[layer] (T x d_model).
    Raises:
        InputError: If layer is outside [0, n_layers].
    """
    if not 0 <= layer <= model.config.n_layers:
        raise InputError(f"Layer {layer} outside [0, {model.config.n_layers}]")
    if layer == 0:
        return grad_wrt_embeddings(model, token_ids, target)
    check_target(model, target)
    embeddings = model.embed(token_ids).detach().requires_grad_(True)
    trace = model.trace(embeddings.unsqueeze(0))
    (grad,) = torch.autograd.grad(
        scalar_output(trace.logits, target).sum(), trace.hidden_states[layer]
    )
    return grad[0].numpy().copy()
