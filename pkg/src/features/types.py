from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np

from src.errors import DataValidationError, InputError

FEATURE_KINDS = ("attribution", "conductance", "attention", "activation")


@dataclass(frozen=True)
class Word:
    text: str
    onset_s: float
    offset_s: float


@dataclass(frozen=True)
class StoryTranscript:
    """
    Ordered words with onset/offset times in seconds.
    """

    words: Tuple[Word, ...]
    story_id: str = "story"

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        previous = float("-inf")
        for index, word in enumerate(self.words):
            if word.offset_s < word.onset_s:
                raise DataValidationError(f"offset before onset for word '{word.text}'", line=index + 1)
            if word.onset_s < previous:
                raise DataValidationError(f"onset decreases at word '{word.text}'", line=index + 1)
            previous = word.onset_s

    def __len__(self) -> int:
        return len(self.words)

    @property
    def texts(self) -> List[str]:
        return [w.text for w in self.words]

    @property
    def onsets(self) -> np.ndarray:
        return np.array([w.onset_s for w in self.words], dtype=np.float64)


@dataclass(frozen=True)
class FeatureMatrix:
    """
    Words x features matrix. `meta` carries the method or layer that produced it.
    """

    values: np.ndarray
    kind: str
    word_indices: np.ndarray
    story_id: str
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        indices = np.asarray(self.word_indices, dtype=np.int64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "word_indices", indices)
        if self.kind not in FEATURE_KINDS:
            raise InputError(f"Unknown feature kind: {self.kind}")
        if values.ndim != 2 or values.shape[0] != len(indices):
            raise InputError(
                f"Feature matrix shape {values.shape} does not match {len(indices)} word indices"
            )
        if len(indices) > 1 and not np.all(np.diff(indices) > 0):
            raise InputError("word_indices must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise InputError("Feature matrix contains non-finite values")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def label(self) -> str:
        detail = self.meta.get("method", self.meta.get("layer"))
        return self.kind if detail is None else f"{self.kind}:{detail}"

    def restrict(self, word_indices: np.ndarray) -> "FeatureMatrix":
        """Rows for the given story positions (a subset of this matrix's rows)."""
        rows = np.searchsorted(self.word_indices, word_indices)
        if np.any(rows >= len(self.word_indices)) or np.any(self.word_indices[rows] != word_indices):
            raise InputError("Requested word indices are not all present")
        return FeatureMatrix(self.values[rows], self.kind, word_indices, self.story_id, dict(self.meta))


@dataclass(frozen=True)
class Window:
    start: int
    word_span: Tuple[int, ...]
    prediction_target: int


@dataclass(frozen=True)
class WindowPlan:
    windows: Tuple[Window, ...]
    window_len: int

    def __len__(self) -> int:
        return len(self.windows)
