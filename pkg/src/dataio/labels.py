from logging import getLogger, basicConfig
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
from pandas.errors import EmptyDataError, ParserError

from src.config import LOG_FORMAT, LOG_LEVEL
from src.errors import InputError, ParseError

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)


def _read_index_table(path: str | Path, index_name: str, value_name: str) -> Dict[int, str]:
    """
    Two-column "<int><TAB><name>" file, optionally starting with a header line
    naming the columns. Blank lines are ignored.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"File not found: {path}")
    try:
        frame = pd.read_csv(path, sep="\t", header=None, dtype=str, keep_default_na=False,
                            skip_blank_lines=False, engine="python")
    except EmptyDataError:
        return {}
    except ParserError as e:
        raise ParseError(f"malformed line in {path}: {e}") from e
    if frame.shape[1] != 2:
        raise ParseError(f"expected 2 tab-separated columns in {path}, found {frame.shape[1]}", line=1)

    table: Dict[int, str] = {}
    for row, cells in enumerate(frame.itertuples(index=False, name=None)):
        line = row + 1
        key, value = ("" if pd.isna(cell) else str(cell).strip() for cell in cells)
        if not key and not value:
            continue
        if line == 1 and key == index_name:
            continue
        try:
            index = int(key)
        except ValueError as e:
            raise ParseError(f"{index_name} '{key}' is not an integer", line=line) from e
        if index < 0 or not value:
            raise ParseError(f"invalid {index_name}/{value_name} pair", line=line)
        if index in table:
            raise ParseError(f"duplicate {index_name} {index}", line=line)
        table[index] = value
    return table


def read_roi_labels(path: str | Path) -> Dict[int, str]:
    """Voxel id -> ROI name from "voxel_id<TAB>roi_name" lines."""
    labels = _read_index_table(path, "voxel_id", "roi_name")
    logger.info(f"Read {len(labels)} ROI labels ({len(set(labels.values()))} ROIs) from {path}")
    return labels


def labels_per_voxel(labels: Dict[int, str], n_voxels: int) -> List[Optional[str]]:
    """ROI name per voxel; unlabeled voxels get None."""
    if any(v >= n_voxels for v in labels):
        raise InputError(f"ROI labels reference voxels beyond {n_voxels}")
    return [labels.get(v) for v in range(n_voxels)]


def read_pos_tags(path: str | Path) -> Dict[int, str]:
    """Story position -> POS tag from "word_index<TAB>tag" lines."""
    tags = _read_index_table(path, "word_index", "tag")
    logger.info(f"Read {len(tags)} POS tags from {path}")
    return tags
