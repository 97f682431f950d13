from logging import getLogger, basicConfig
from typing import List, Sequence, Tuple

from src.config import LOG_FORMAT, LOG_LEVEL
from src.errors import InputError
from src.features.types import StoryTranscript, Window, WindowPlan
from src.lm.model import TinyLM
from src.lm.tokenizer import WordTokenizer

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)


def build_windows(transcript: StoryTranscript, window_len: int) -> WindowPlan:
    """
    Sliding windows with a stride of one word. Window i covers words
    [i, i + window_len - 1] and predicts word i + window_len.
    Args:
        transcript (StoryTranscript): The story.
        window_len (int): Words per window.
    Returns:
        WindowPlan: One window per word that can serve as a prediction target.
    Raises:
        InputError: If the transcript has no word after the first window.
    """
    if window_len < 1:
        raise InputError(f"window_len must be positive, got {window_len}")
    n_words = len(transcript)
    if n_words <= window_len:
        raise InputError(
            f"Transcript '{transcript.story_id}' has {n_words} words; need more than {window_len}"
        )
    windows = tuple(
        Window(start, tuple(range(start, start + window_len)), start + window_len)
        for start in range(n_words - window_len)
    )
    return WindowPlan(windows, window_len)


def require_tokenizer(model: TinyLM) -> WordTokenizer:
    if model.tokenizer is None:
        raise InputError("Model carries no tokenizer; word features need one")
    return model.tokenizer


def tokenize_words(tokenizer: WordTokenizer, words: Sequence[str]) -> Tuple[List[int], List[int]]:
    """Token ids and the window-relative word position of every token."""
    return tokenizer.encode_words(words)


def window_tokens(model: TinyLM, transcript: StoryTranscript, window: Window) -> Tuple[List[int], List[int], int]:
    """
    Tokens of every word in the window's span plus the first token of the
    prediction target word.
    Returns:
        Tuple[List[int], List[int], int]: ids, token->word map, target token id.
    Raises:
        InputError: If the span's tokens do not fit in max_seq_len.
    """
    tokenizer = require_tokenizer(model)
    texts = transcript.texts
    ids, token_word_map = tokenize_words(tokenizer, [texts[p] for p in window.word_span])
    if len(ids) > model.config.max_seq_len:
        raise InputError(
            f"Window starting at word {window.start} has {len(ids)} tokens; "
            f"max_seq_len is {model.config.max_seq_len}"
        )
    target_ids, _ = tokenize_words(tokenizer, [texts[window.prediction_target]])
    return ids, token_word_map, target_ids[0]
