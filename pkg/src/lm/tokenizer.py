from logging import getLogger, basicConfig
from math import ceil
from typing import Iterable, List, Sequence, Tuple

from src.config import LOG_FORMAT, LOG_LEVEL, DEFAULT_SPLIT_LEN, UNKNOWN_TOKEN, SUBWORD_PREFIX
from src.errors import InputError

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)


class WordTokenizer:
    """
    Word-level vocabulary with one deterministic sub-word rule: a word longer
    than split_len characters becomes two tokens, the head and a "##"-prefixed
    tail. The rule exists so word scores are exercised as sums of token scores.
    """

    def __init__(self, vocab: Sequence[str], split_len: int = DEFAULT_SPLIT_LEN):
        if split_len < 2:
            raise InputError(f"split_len must be at least 2, got {split_len}")
        if not vocab or vocab[0] != UNKNOWN_TOKEN:
            raise InputError(f"Vocabulary must start with {UNKNOWN_TOKEN}")
        self.vocab = list(vocab)
        self.split_len = split_len
        self.index = {token: i for i, token in enumerate(self.vocab)}

    def __len__(self) -> int:
        return len(self.vocab)

    @classmethod
    def build(cls, words: Iterable[str], split_len: int = DEFAULT_SPLIT_LEN) -> "WordTokenizer":
        """
        Build the vocabulary from a corpus of words.
        Args:
            words (Iterable[str]): Corpus words, in any order.
            split_len (int): Words longer than this are split into two tokens.
        Returns:
            WordTokenizer: Tokenizer whose vocabulary is <unk> followed by the sorted token set.
        """
        splitter = cls([UNKNOWN_TOKEN], split_len)
        tokens = {token for word in words for token in splitter.split_word(word)}
        tokens.discard(UNKNOWN_TOKEN)
        logger.info(f"Built vocabulary with {len(tokens) + 1} tokens (split_len={split_len}).")
        return cls([UNKNOWN_TOKEN] + sorted(tokens), split_len)

    def split_word(self, word: str) -> List[str]:
        text = word.strip().lower()
        if not text:
            raise InputError("Cannot tokenize an empty word")
        if len(text) <= self.split_len:
            return [text]
        half = ceil(len(text) / 2)
        return [text[:half], SUBWORD_PREFIX + text[half:]]

    def encode_words(self, words: Sequence[str]) -> Tuple[List[int], List[int]]:
        """
        Tokenize a word sequence.
        Args:
            words (Sequence[str]): Words in order.
        Returns:
            Tuple[List[int], List[int]]: Token ids and, per token, the position of
            its word within `words`.
        """
        ids: List[int] = []
        token_word_map: List[int] = []
        unk = self.index[UNKNOWN_TOKEN]
        for position, word in enumerate(words):
            for token in self.split_word(word):
                ids.append(self.index.get(token, unk))
                token_word_map.append(position)
        return ids, token_word_map

    def encode_corpus(self, words: Sequence[str]) -> List[int]:
        return self.encode_words(words)[0]
