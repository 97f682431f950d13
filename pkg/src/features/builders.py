"""
Word-aligned feature spaces built from a transcript and a model.

Attribution and conductance rows hold, for each retained word, its score in
each of the window_len windows that contain it, ordered by the word's distance
from the window end (column 0 = the window where it is the most recent word).
The first and last window_len words are dropped.
"""

from dataclasses import dataclass
from logging import getLogger, basicConfig
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from src.attribution.aggregation import word_matrix
from src.attribution.conductance import layer_conductance
from src.attribution.methods import METHODS, attribute, erasure_words
from src.config import (
    LOG_FORMAT,
    LOG_LEVEL,
    WORKERS,
    ATTENTION_WINDOW_LEN,
    DEFAULT_IG_STEPS,
    DEFAULT_WINDOW_LEN,
)
from src.errors import InputError
from src.features.types import FeatureMatrix, StoryTranscript
from src.features.windows import build_windows, require_tokenizer, tokenize_words, window_tokens
from src.lm.model import TinyLM, forward
from src.schemas.lm_schema import TargetSpec
from src.utils.cache import cache_with_attributions, cache_with_conductance

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)

LayerChoice = int | Literal["all"]


@dataclass(frozen=True)
class WordLayerImportance:
    """
    values[r, l - 1]: conductance of word word_indices[r] through block l,
    summed over the windows containing it. best_layer is 1-based.
    """

    values: np.ndarray
    word_indices: np.ndarray
    story_id: str

    @property
    def best_layer(self) -> np.ndarray:
        return np.argmax(self.values, axis=1) + 1


@cache_with_attributions
def window_word_scores(
    model: TinyLM,
    token_ids: Tuple[int, ...],
    target: TargetSpec,
    method: str,
    steps_m: int,
    token_word_map: Tuple[int, ...],
) -> np.ndarray:
    """One attribution score per word of a single window."""
    if method == "erasure":
        return erasure_words(model, token_ids, target, token_word_map)
    scores = attribute(model, token_ids, target, method, steps_m).scores
    return word_matrix(scores, token_word_map)


@cache_with_conductance
def window_conductance(
    model: TinyLM,
    token_ids: Tuple[int, ...],
    target: TargetSpec,
    steps_m: int,
    token_word_map: Tuple[int, ...],
) -> np.ndarray:
    """(n_layers + 1) x n_words conductance of a single window, tokens summed per word."""
    return word_matrix(layer_conductance(model, token_ids, target, steps_m).scores, token_word_map)


def _check_length(transcript: StoryTranscript, window_len: int) -> None:
    if len(transcript) < 2 * window_len + 1:
        raise InputError(
            f"Transcript '{transcript.story_id}' has {len(transcript)} words; "
            f"need at least {2 * window_len + 1} for window_len={window_len}"
        )


def _window_results(
    transcript: StoryTranscript,
    model: TinyLM,
    window_len: int,
    compute,
) -> Tuple[np.ndarray, Dict[int, np.ndarray]]:
    """
    Evaluate `compute(ids, map, target)` on every window that holds a retained
    word. Returns the retained word indices and results keyed by window start.
    """
    _check_length(transcript, window_len)
    plan = build_windows(transcript, window_len)
    retained = np.arange(window_len, len(transcript) - window_len)
    needed = [w for w in plan.windows if w.start >= 1]

    def run(window):
        ids, token_word_map, target_id = window_tokens(model, transcript, window)
        return compute(tuple(ids), tuple(token_word_map), target_id)

    results = Parallel(n_jobs=WORKERS, prefer="threads")(delayed(run)(w) for w in needed)
    return retained, {w.start: r for w, r in zip(needed, results)}


def _assemble_rows(retained: np.ndarray, per_window: Dict[int, np.ndarray], window_len: int) -> np.ndarray:
    """
    rows[r, c] = score of word p = retained[r] in the window ending c words after it.
    `per_window[start]` is indexed by window-relative word position on its last axis.
    """
    sample = next(iter(per_window.values()))
    rows = np.zeros(sample.shape[:-1] + (len(retained), window_len))
    for r, position in enumerate(retained):
        for distance in range(window_len):
            start = position + distance - window_len + 1
            rows[..., r, distance] = per_window[start][..., window_len - 1 - distance]
    return rows


def attribution_features(
    transcript: StoryTranscript,
    model: TinyLM,
    method: str,
    window_len: int = DEFAULT_WINDOW_LEN,
    steps_m: int = DEFAULT_IG_STEPS,
    target_kind: Literal["logit", "log_prob"] = "logit",
) -> FeatureMatrix:
    """
    (W - 2 * window_len) x window_len attribution feature space.
    Args:
        transcript (StoryTranscript): The story.
        model (TinyLM): Model whose next-word prediction is explained.
        method (str): One of grad_norm, grad_x_input, integrated_gradients, erasure.
        window_len (int): Words per window.
        steps_m (int): Integration steps for integrated gradients.
        target_kind (str): Explain the target's logit or log-probability.
    Returns:
        FeatureMatrix: kind "attribution" with meta {"method": method}.
    Raises:
        InputError: On an unknown method or a transcript that is too short.
    """
    if method not in METHODS:
        raise InputError(f"Unknown attribution method: {method}")
    logger.info(
        f"Building {method} attribution features for '{transcript.story_id}' "
        f"({len(transcript)} words, window_len={window_len})."
    )

    def compute(ids, token_word_map, target_id):
        target = TargetSpec(target_token_id=target_id, kind=target_kind)
        return window_word_scores(model, ids, target, method, steps_m, token_word_map)

    retained, per_window = _window_results(transcript, model, window_len, compute)
    values = _assemble_rows(retained, per_window, window_len)
    return FeatureMatrix(
        values,
        "attribution",
        retained,
        transcript.story_id,
        {"method": method, "window_len": window_len, "target_kind": target_kind},
    )


def _conductance_rows(
    transcript: StoryTranscript,
    model: TinyLM,
    window_len: int,
    steps_m: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Retained word indices and (n_layers + 1) x n_retained x window_len rows."""

    def compute(ids, token_word_map, target_id):
        target = TargetSpec(target_token_id=target_id)
        return window_conductance(model, ids, target, steps_m, token_word_map)

    retained, per_window = _window_results(transcript, model, window_len, compute)
    return retained, _assemble_rows(retained, per_window, window_len)


def conductance_features(
    transcript: StoryTranscript,
    model: TinyLM,
    layer: LayerChoice,
    window_len: int = DEFAULT_WINDOW_LEN,
    steps_m: int = DEFAULT_IG_STEPS,
) -> FeatureMatrix:
    """
    Layer conductance feature space with the attribution windowing contract.
    layer="all" concatenates layers 0..n_layers, window_len columns each.
    Raises:
        InputError: If layer is outside [0, n_layers].
    """
    n_layers = model.config.n_layers
    if layer != "all" and not (isinstance(layer, int) and 0 <= layer <= n_layers):
        raise InputError(f"Layer {layer} outside [0, {n_layers}]")
    logger.info(
        f"Building layer {layer} conductance features for '{transcript.story_id}' "
        f"({len(transcript)} words)."
    )
    retained, rows = _conductance_rows(transcript, model, window_len, steps_m)
    if layer == "all":
        values = np.concatenate(list(rows), axis=1)
    else:
        values = rows[layer]
    return FeatureMatrix(
        values,
        "conductance",
        retained,
        transcript.story_id,
        {"layer": layer, "window_len": window_len, "steps_m": steps_m},
    )


def word_layer_importance(
    transcript: StoryTranscript,
    model: TinyLM,
    window_len: int = DEFAULT_WINDOW_LEN,
    steps_m: int = DEFAULT_IG_STEPS,
) -> WordLayerImportance:
    """
    Per retained word and transformer block, the word's conductance summed over
    every window it appears in.
    """
    retained, rows = _conductance_rows(transcript, model, window_len, steps_m)
    values = rows[1:].sum(axis=2).T
    return WordLayerImportance(values, retained, transcript.story_id)


def attention_features(
    transcript: StoryTranscript,
    model: TinyLM,
    window_len: int = ATTENTION_WINDOW_LEN,
) -> FeatureMatrix:
    """
    Attention received by each word of a window_len-word input ending at the
    row's word: column-wise mean of every head's attention map, summed over
    each word's tokens, flattened layer-major then head then word position.
    Words without a full window_len-word left context are dropped.
    Returns:
        FeatureMatrix: (W - window_len + 1) x (n_layers * n_heads * window_len).
    """
    if len(transcript) <= window_len:
        raise InputError(
            f"Transcript '{transcript.story_id}' has {len(transcript)} words; need more than {window_len}"
        )
    tokenizer = require_tokenizer(model)
    texts = transcript.texts
    ends = list(range(window_len - 1, len(transcript)))
    logger.info(f"Building attention features for '{transcript.story_id}' ({len(ends)} windows).")

    def compute(end: int) -> np.ndarray:
        ids, token_word_map = tokenize_words(tokenizer, texts[end - window_len + 1 : end + 1])
        maps = forward(model, ids).attention_maps
        received = maps.mean(axis=2)
        return word_matrix(received, token_word_map).reshape(-1)

    rows = Parallel(n_jobs=WORKERS, prefer="threads")(delayed(compute)(end) for end in ends)
    return FeatureMatrix(
        np.stack(rows),
        "attention",
        np.array(ends),
        transcript.story_id,
        {"window_len": window_len},
    )


def activation_features(
    transcript: StoryTranscript,
    model: TinyLM,
    layer: LayerChoice,
    context_len: Optional[int] = None,
) -> FeatureMatrix:
    """
    One row per word: the hidden state at the word's final token at `layer`,
    from a forward pass whose context ends at that token and holds at most
    context_len tokens. Earlier tokens of a split word only act as context.
    layer="all" concatenates layers 0..n_layers.
    Raises:
        InputError: On a layer or context_len out of range.
    """
    config = model.config
    context_len = config.max_seq_len if context_len is None else context_len
    if not 1 <= context_len <= config.max_seq_len:
        raise InputError(f"context_len must be in [1, {config.max_seq_len}], got {context_len}")
    if layer != "all" and not (isinstance(layer, int) and 0 <= layer <= config.n_layers):
        raise InputError(f"Layer {layer} outside [0, {config.n_layers}]")
    if len(transcript) == 0:
        raise InputError("Transcript is empty")

    ids, token_word_map = tokenize_words(require_tokenizer(model), transcript.texts)
    last_token = [0] * len(transcript)
    for token, word in enumerate(token_word_map):
        last_token[word] = token
    logger.info(
        f"Building layer {layer} activation features for '{transcript.story_id}' "
        f"({len(transcript)} words, context_len={context_len})."
    )

    def compute(word: int) -> np.ndarray:
        end = last_token[word] + 1
        final = forward(model, ids[max(0, end - context_len) : end]).hidden_states[:, -1]
        return final.reshape(-1) if layer == "all" else final[layer]

    rows = Parallel(n_jobs=WORKERS, prefer="threads")(
        delayed(compute)(word) for word in range(len(transcript))
    )
    return FeatureMatrix(
        np.stack(rows),
        "activation",
        np.arange(len(transcript)),
        transcript.story_id,
        {"layer": layer, "context_len": context_len},
    )


def build_features(
    kind: str,
    transcript: StoryTranscript,
    model: TinyLM,
    method: Optional[str] = None,
    layer: Optional[LayerChoice] = None,
    window_len: Optional[int] = None,
    steps_m: int = DEFAULT_IG_STEPS,
) -> FeatureMatrix:
    """Dispatch by feature kind; used by the command-line stages."""
    if kind == "attribution":
        if method is None:
            raise InputError("Attribution features need a method")
        return attribution_features(transcript, model, method, window_len or DEFAULT_WINDOW_LEN, steps_m)
    if kind == "conductance":
        return conductance_features(
            transcript, model, "all" if layer is None else layer, window_len or DEFAULT_WINDOW_LEN, steps_m
        )
    if kind == "attention":
        return attention_features(transcript, model, window_len or ATTENTION_WINDOW_LEN)
    if kind == "activation":
        return activation_features(transcript, model, model.config.n_layers if layer is None else layer)
    raise InputError(f"Unknown feature kind: {kind}")


def align_features(matrices: Sequence[FeatureMatrix]) -> List[FeatureMatrix]:
    """Restrict every matrix to the word indices they all share."""
    common = matrices[0].word_indices
    for matrix in matrices[1:]:
        common = np.intersect1d(common, matrix.word_indices)
    if len(common) == 0:
        raise InputError("Feature matrices share no word indices")
    return [matrix.restrict(common) for matrix in matrices]
