from dataclasses import dataclass
from json import dumps, loads, JSONDecodeError
from logging import getLogger, basicConfig
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from src.config import LOG_FORMAT, LOG_LEVEL
from src.encoder.types import BoldRun
from src.errors import DataValidationError, InputError
from src.schemas.synthetic_schema import GroundTruthManifest
from utils.artifact_manager import ArtifactManager
from utils.binary_codec import BinaryCodec, CodecError

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)

codec = BinaryCodec("bold_run")

DATASET_FILE = "dataset.json"
GROUND_TRUTH_FILE = "ground_truth.json"


@dataclass(frozen=True)
class BoldDataset:
    """Runs of several subjects listening to the same story."""

    runs: List[BoldRun]
    story_id: str
    tr_s: float
    ground_truth: Optional[GroundTruthManifest] = None

    def __post_init__(self):
        if not self.runs:
            raise InputError("A BOLD dataset needs at least one run")
        shapes = {run.values.shape for run in self.runs}
        if len(shapes) != 1:
            raise InputError(f"Runs have different shapes: {sorted(shapes)}")

    @property
    def subject_ids(self) -> List[str]:
        return [run.subject_id for run in self.runs]

    @property
    def n_voxels(self) -> int:
        return self.runs[0].n_voxels

    @property
    def n_trs(self) -> int:
        return self.runs[0].n_trs

    def as_array(self) -> np.ndarray:
        """subjects x voxels x TRs"""
        return np.stack([run.values for run in self.runs])


def write_bold(path: str | Path, run: BoldRun) -> None:
    header = {
        "subject_id": run.subject_id,
        "story_id": run.story_id,
        "n_voxels": run.n_voxels,
        "n_trs": run.n_trs,
        "tr_s": run.tr_s,
    }
    codec.write(path, header, {"values": run.values})


def read_bold(path: str | Path) -> BoldRun:
    """
    Read one run.
    Raises:
        CodecError: On a malformed file or a header disagreeing with the payload.
        DataValidationError: If the header declares zero voxels or TRs.
    """
    header, blocks = codec.read(path)
    n_voxels, n_trs = int(header.get("n_voxels", -1)), int(header.get("n_trs", -1))
    if n_trs == 0 or n_voxels == 0:
        raise DataValidationError(f"{path} declares {n_voxels} voxels and {n_trs} TRs")
    values = blocks.get("values")
    if values is None or values.shape != (n_voxels, n_trs):
        shape = None if values is None else values.shape
        raise CodecError(f"{path}: header shape ({n_voxels}, {n_trs}) does not match payload {shape}")
    return BoldRun(values, header["subject_id"], header["story_id"], float(header["tr_s"]))


def write_bold_dataset(directory: str | Path, dataset: BoldDataset) -> List[Path]:
    """
    Write one file per subject plus dataset.json (and ground_truth.json when
    present). Returns the written paths.
    """
    directory = Path(directory)
    manager = ArtifactManager(directory)
    paths = []
    for run in dataset.runs:
        path = directory / f"{run.subject_id}.bold"
        write_bold(path, run)
        paths.append(path)
    index = {"story_id": dataset.story_id, "tr_s": dataset.tr_s, "subjects": dataset.subject_ids}
    paths.append(manager.write_text(DATASET_FILE, dumps(index, indent=2, sort_keys=True)))
    if dataset.ground_truth is not None:
        paths.append(manager.write_text(GROUND_TRUTH_FILE, dataset.ground_truth.model_dump_json(indent=2)))
    logger.info(f"Wrote {len(dataset.runs)} BOLD runs to {directory}")
    return paths


def read_bold_dataset(directory: str | Path) -> BoldDataset:
    """
    Read a directory written by write_bold_dataset.
    Raises:
        InputError: If the directory or its index is missing.
        CodecError: On malformed index, manifest or run files.
    """
    directory = Path(directory)
    index_path = directory / DATASET_FILE
    if not index_path.is_file():
        raise InputError(f"BOLD dataset index not found: {index_path}")
    try:
        index = loads(index_path.read_text(encoding="utf-8"))
    except JSONDecodeError as e:
        raise CodecError(f"Malformed dataset index {index_path}: {e}") from e

    runs = [read_bold(directory / f"{subject}.bold") for subject in index["subjects"]]
    ground_truth = None
    truth_path = directory / GROUND_TRUTH_FILE
    if truth_path.is_file():
        try:
            ground_truth = GroundTruthManifest.model_validate_json(truth_path.read_text(encoding="utf-8"))
        except ValidationError as e:
            raise CodecError(f"Malformed ground truth manifest {truth_path}: {e}") from e
    logger.info(f"Read {len(runs)} BOLD runs from {directory}")
    return BoldDataset(runs, index["story_id"], float(index["tr_s"]), ground_truth)
