from dataclasses import dataclass
from typing import List, Mapping, Sequence

import numpy as np

from src.attribution.methods import AttributionVector
from src.errors import InputError


@dataclass(frozen=True)
class WordScore:
    word_index: int
    score: float


def normalize_token_map(token_word_map: Sequence[int] | Mapping[int, Sequence[int]], n_tokens: int) -> List[int]:
    """
    Turn either form of token->word map into one word index per token.
    Accepts a per-token list of word indices, or a mapping word -> token positions.
    Raises:
        InputError: If a token is unmapped or mapped twice, or word indices leave a gap.
    """
    if isinstance(token_word_map, Mapping):
        per_token = [-1] * n_tokens
        for word, tokens in token_word_map.items():
            for token in tokens:
                if not 0 <= token < n_tokens:
                    raise InputError(f"Token position {token} out of range")
                if per_token[token] != -1:
                    raise InputError(f"Token {token} is mapped to more than one word")
                per_token[token] = int(word)
        if -1 in per_token:
            raise InputError(f"Token {per_token.index(-1)} is not mapped to any word")
    else:
        per_token = [int(w) for w in token_word_map]
        if len(per_token) != n_tokens:
            raise InputError(
                f"token_word_map covers {len(per_token)} tokens, expected {n_tokens}"
            )

    words = sorted(set(per_token))
    if words and words != list(range(words[0], words[-1] + 1)):
        raise InputError("token_word_map leaves a gap between word indices")
    return per_token


def tokens_to_words(
    scores: AttributionVector | np.ndarray,
    token_word_map: Sequence[int] | Mapping[int, Sequence[int]],
    word_offset: int = 0,
) -> List[WordScore]:
    """
    Sum token scores into word scores, ordered by word position.
    Args:
        scores: Token scores or an AttributionVector.
        token_word_map: Word index per token, or word -> token positions.
        word_offset (int): Added to every word index (story position of word 0).
    Returns:
        List[WordScore]: One entry per word.
    """
    values = scores.scores if isinstance(scores, AttributionVector) else np.asarray(scores)
    per_token = normalize_token_map(token_word_map, len(values))
    words = sorted(set(per_token))
    totals = {word: 0.0 for word in words}
    for token, word in enumerate(per_token):
        totals[word] += float(values[token])
    return [WordScore(word + word_offset, totals[word]) for word in words]


def word_matrix(values: np.ndarray, token_word_map: Sequence[int]) -> np.ndarray:
    """
    Sum the last axis of `values` (... x T) into words (... x n_words).
    """
    per_token = normalize_token_map(token_word_map, values.shape[-1])
    words = sorted(set(per_token))
    out = np.zeros(values.shape[:-1] + (len(words),))
    for token, word in enumerate(per_token):
        out[..., word - words[0]] += values[..., token]
    return out
