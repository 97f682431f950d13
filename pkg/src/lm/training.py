from copy import deepcopy
from logging import getLogger, basicConfig
from math import isfinite
from typing import Sequence

import torch
import torch.nn.functional as F

from src.config import LOG_FORMAT, LOG_LEVEL
from src.errors import InputError, TrainingError
from src.lm.model import TinyLM

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)

BATCH_SIZE = 8


def _chunks(corpus: torch.Tensor, seq_len: int):
    starts = range(0, len(corpus) - 1, seq_len)
    for start in starts:
        stop = min(start + seq_len, len(corpus) - 1)
        yield corpus[start:stop], corpus[start + 1 : stop + 1]


def corpus_loss(model: TinyLM, corpus: Sequence[int]) -> float:
    """
    Mean next-token cross-entropy over consecutive max_seq_len chunks of the corpus.
    """
    if len(corpus) < 2:
        raise InputError("Corpus must contain at least 2 tokens")
    ids = torch.as_tensor(list(corpus), dtype=torch.long)
    total, count = 0.0, 0
    with torch.no_grad():
        for inputs, targets in _chunks(ids, model.config.max_seq_len):
            logits = model.trace(model.embed(inputs.tolist()).unsqueeze(0)).logits[0]
            total += float(F.cross_entropy(logits, targets, reduction="sum"))
            count += len(targets)
    return total / count


def train(
    model: TinyLM,
    corpus: Sequence[int],
    steps: int,
    learning_rate: float,
    seed: int,
) -> TinyLM:
    """
    Fit the model to next-token prediction with plain SGD on random corpus windows.
    The returned model is the checkpoint with the lowest corpus loss seen, the
    untrained parameters included, so the loss never increases.
    Args:
        model (TinyLM): Starting model; left untouched.
        corpus (Sequence[int]): Token ids.
        steps (int): Number of SGD steps.
        learning_rate (float): SGD step size.
        seed (int): Seed of the window sampler.
    Returns:
        TinyLM: A new trained model.
    Raises:
        InputError: If the corpus is shorter than 2 tokens or holds invalid ids.
        TrainingError: If a loss becomes non-finite.
    """
    if len(corpus) < 2:
        raise InputError("Corpus must contain at least 2 tokens")
    ids = torch.as_tensor(list(corpus), dtype=torch.long)
    if int(ids.min()) < 0 or int(ids.max()) >= model.config.vocab_size:
        raise InputError(f"Corpus token id out of range [0, {model.config.vocab_size})")

    trained = deepcopy(model)
    trained.__dict__.pop("fingerprint", None)
    if steps == 0:
        return trained

    seq_len = min(model.config.max_seq_len, len(ids) - 1)
    generator = torch.Generator().manual_seed(seed)
    optimizer = torch.optim.SGD(trained.parameters(), lr=learning_rate)
    eval_every = max(1, steps // 10)

    best_loss = corpus_loss(trained, corpus)
    best_state = deepcopy(trained.state_dict())
    logger.info(f"Training for {steps} steps; initial corpus loss {best_loss:.4f}.")

    trained.train()
    for step in range(1, steps + 1):
        starts = torch.randint(0, len(ids) - seq_len, (BATCH_SIZE,), generator=generator)
        inputs = torch.stack([ids[s : s + seq_len] for s in starts.tolist()])
        targets = torch.stack([ids[s + 1 : s + seq_len + 1] for s in starts.tolist()])

        positions = torch.arange(seq_len)
        embeddings = trained.token_embedding(inputs) + trained.positional_embedding(positions)
        logits = trained.trace(embeddings).logits
        loss = F.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1))
        if not isfinite(float(loss)):
            raise TrainingError("Non-finite training loss", step=step)

        optimizer.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(trained.parameters(), 1.0)
        optimizer.step()

        if step % eval_every == 0 or step == steps:
            current = corpus_loss(trained, corpus)
            if not isfinite(current):
                raise TrainingError("Non-finite corpus loss", step=step)
            logger.info(f"Step {step}: batch loss {float(loss):.4f}, corpus loss {current:.4f}")
            if current < best_loss:
                best_loss = current
                best_state = deepcopy(trained.state_dict())

    trained.load_state_dict(best_state)
    trained.eval()
    optimizer.zero_grad(set_to_none=True)
    logger.info(f"Training finished; best corpus loss {best_loss:.4f}.")
    return trained
