from logging import getLogger, basicConfig
from pathlib import Path
from re import search
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from pandas.errors import EmptyDataError, ParserError

from src.config import LOG_FORMAT, LOG_LEVEL, DEFAULT_TR_S
from src.errors import DataValidationError, InputError, ParseError
from src.features.types import StoryTranscript, Word

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)

TRANSCRIPT_COLUMNS = ["word", "onset_s", "offset_s"]

# Words used by generate_transcript; a few exceed the default split length.
STORY_WORDS = [
    "the", "a", "man", "woman", "river", "house", "walked", "saw", "quietly", "old",
    "door", "night", "and", "then", "she", "he", "opened", "remembered", "story", "boat",
    "under", "lantern", "whispered", "across", "village", "morning", "was", "to", "of", "light",
    "extraordinary", "mountain", "listened", "voice", "in", "her", "his", "long", "road", "home",
]


def _parse_float(value, line: int, column: str) -> float:
    try:
        number = float(value)
    except (TypeError, ValueError) as e:
        raise ParseError(f"{column} '{value}' is not a number", line=line) from e
    if not np.isfinite(number):
        raise ParseError(f"{column} '{value}' is not finite", line=line)
    return number


def parse_transcript(path: str | Path, story_id: Optional[str] = None) -> StoryTranscript:
    """
    Read a tab-separated transcript with the header "word<TAB>onset_s<TAB>offset_s".
    Args:
        path: Transcript file.
        story_id (Optional[str]): Defaults to the file stem.
    Returns:
        StoryTranscript: Words in file order.
    Raises:
        InputError: If the file does not exist.
        ParseError: On a bad header or malformed line (with its line number).
        DataValidationError: On decreasing onsets or an offset before its onset.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"Transcript not found: {path}")
    try:
        frame = pd.read_csv(
            path,
            sep="\t",
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            engine="python",
        )
    except EmptyDataError as e:
        raise ParseError("file is empty", line=1) from e
    except ParserError as e:
        match = search(r"line (\d+)", str(e))
        raise ParseError(f"malformed line: {e}", line=int(match.group(1)) if match else None) from e

    if list(frame.columns) != TRANSCRIPT_COLUMNS:
        raise ParseError(f"header must be {'<TAB>'.join(TRANSCRIPT_COLUMNS)}", line=1)

    words: List[Word] = []
    previous_onset = float("-inf")
    for row, cells in enumerate(frame.itertuples(index=False, name=None)):
        line = row + 2
        text, onset, offset = ("" if pd.isna(cell) else cell for cell in cells)
        if not text and not onset and not offset:
            continue
        if not text or not str(text).strip():
            raise ParseError("empty word", line=line)
        onset_s = _parse_float(onset, line, "onset_s")
        offset_s = _parse_float(offset, line, "offset_s")
        if onset_s < previous_onset:
            raise DataValidationError(f"onset {onset_s} is smaller than the previous onset {previous_onset}", line=line)
        if offset_s < onset_s:
            raise DataValidationError(f"offset {offset_s} precedes onset {onset_s}", line=line)
        previous_onset = onset_s
        words.append(Word(str(text).strip(), onset_s, offset_s))

    transcript = StoryTranscript(tuple(words), story_id or path.stem)
    logger.info(f"Parsed transcript '{transcript.story_id}' with {len(transcript)} words from {path}")
    return transcript


def transcript_frame(transcript: StoryTranscript) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "word": [w.text for w in transcript.words],
            "onset_s": [w.onset_s for w in transcript.words],
            "offset_s": [w.offset_s for w in transcript.words],
        },
        columns=TRANSCRIPT_COLUMNS,
    )


def generate_transcript(
    n_words: int,
    n_trs: int,
    tr_s: float = DEFAULT_TR_S,
    seed: int = 0,
    vocabulary: Optional[Sequence[str]] = None,
    story_id: str = "synthetic",
) -> StoryTranscript:
    """
    Evenly paced synthetic story spanning [0, n_trs * tr_s). Each word is drawn
    from three successors of the previous one, so a language model has
    structure to learn.
    """
    if n_words < 1 or n_trs < 1 or tr_s <= 0:
        raise InputError(f"Invalid transcript geometry: {n_words} words, {n_trs} TRs, tr_s={tr_s}")
    vocabulary = list(vocabulary or STORY_WORDS)
    rng = np.random.default_rng(seed)
    gap = n_trs * tr_s / n_words

    indices = [int(rng.integers(len(vocabulary)))]
    for _ in range(n_words - 1):
        indices.append((3 * indices[-1] + int(rng.integers(3)) + 1) % len(vocabulary))
    words = tuple(
        Word(vocabulary[index], round(k * gap, 6), round(k * gap + 0.8 * gap, 6))
        for k, index in enumerate(indices)
    )
    return StoryTranscript(words, story_id)
