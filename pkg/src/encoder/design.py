from logging import getLogger, basicConfig
from typing import Sequence

import numpy as np

from src.config import LOG_FORMAT, LOG_LEVEL
from src.errors import InputError
from src.features.types import FeatureMatrix, StoryTranscript
from src.encoder.types import DesignMatrix

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)


def resample_to_tr(features: FeatureMatrix, transcript: StoryTranscript, n_trs: int, tr_s: float) -> DesignMatrix:
    """
    Sum the feature rows of words whose onset falls in each TR,
    [t * tr_s, (t + 1) * tr_s). TRs without words are zero rows.
    Raises:
        InputError: If a retained word's onset lies outside the run.
    """
    if n_trs < 1 or tr_s <= 0:
        raise InputError(f"Invalid run geometry: n_trs={n_trs}, tr_s={tr_s}")
    if len(features.word_indices) and features.word_indices[-1] >= len(transcript):
        raise InputError("Feature rows reference words beyond the transcript")
    onsets = transcript.onsets[features.word_indices]
    bins = np.floor(onsets / tr_s).astype(np.int64)
    outside = (onsets < 0) | (bins >= n_trs)
    if outside.any():
        word = int(features.word_indices[np.argmax(outside)])
        raise InputError(
            f"Word {word} onset {transcript.onsets[word]:.3f}s is outside the run [0, {n_trs * tr_s:.3f})s"
        )

    values = np.zeros((n_trs, features.values.shape[1]))
    np.add.at(values, bins, features.values)
    return DesignMatrix(values, tr_s, [features.label, f"resample(tr_s={tr_s})"])


def add_fir_delays(design: DesignMatrix, delays: Sequence[int]) -> DesignMatrix:
    """
    Concatenate copies of the matrix shifted down by each delay, zero-padded at
    the top: block d row t holds original row t - d.
    Raises:
        InputError: If a delay is negative or not smaller than the TR count.
    """
    delays = list(delays)
    if not delays:
        raise InputError("At least one delay is required")
    n_trs = design.n_trs
    blocks = []
    for delay in delays:
        if not 0 <= delay < n_trs:
            raise InputError(f"Delay {delay} must be in [0, {n_trs})")
        shifted = np.zeros_like(design.values)
        shifted[delay:] = design.values[: n_trs - delay]
        blocks.append(shifted)
    return DesignMatrix(np.hstack(blocks), design.tr_s, design.provenance + [f"fir(delays={delays})"])
