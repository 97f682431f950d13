from hashlib import sha256
from json import dumps, loads, JSONDecodeError
from logging import getLogger, basicConfig
from pathlib import Path
from typing import Any, Dict, List, Sequence

from pydantic import ValidationError

from src.config import LOG_FORMAT, LOG_LEVEL
from src.errors import ConfigurationError
from src.schemas.pipeline_schema import PipelineConfig

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)


def parse_override(text: str) -> tuple[List[str], Any]:
    """
    "a.b=value" -> (["a", "b"], value). Values are parsed as JSON when
    possible, otherwise kept as strings.
    """
    if "=" not in text:
        raise ConfigurationError(f"Override '{text}' must look like key=value")
    key, raw = text.split("=", 1)
    parts = [part for part in key.strip().split(".") if part]
    if not parts:
        raise ConfigurationError(f"Override '{text}' has an empty key")
    try:
        value = loads(raw)
    except JSONDecodeError:
        value = raw
    return parts, value


def apply_overrides(raw: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    for text in overrides:
        parts, value = parse_override(text)
        node = raw
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigurationError(f"Override '{text}': '{part}' is not a section")
            node = child
        node[parts[-1]] = value
    return raw


def _resolve(base: Path, value: str | None) -> str | None:
    if value is None:
        return None
    path = Path(value)
    return str(path if path.is_absolute() else (base / path).resolve())


def load_config(path: str | Path, overrides: Sequence[str] = ()) -> PipelineConfig:
    """
    Read a JSON pipeline config, apply key=value overrides, validate it and
    resolve relative paths against the config file's directory.
    Raises:
        ConfigurationError: If the file is missing, not JSON, or invalid.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"Config file not found: {path}")
    try:
        raw = loads(path.read_text(encoding="utf-8"))
    except JSONDecodeError as e:
        raise ConfigurationError(f"Config {path} is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigurationError(f"Config {path} must hold a JSON object")

    raw = apply_overrides(raw, overrides)
    try:
        config = PipelineConfig(**raw)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid config {path}: {e}") from e

    base = path.resolve().parent
    paths = config.paths
    resolved = paths.model_copy(
        update={
            "transcripts": [_resolve(base, t) for t in paths.transcripts],
            "model": _resolve(base, paths.model),
            "bold_dir": _resolve(base, paths.bold_dir),
            "output_dir": _resolve(base, paths.output_dir),
            "roi_labels": _resolve(base, paths.roi_labels),
            "pos_tags": _resolve(base, paths.pos_tags),
        }
    )
    logger.info(f"Loaded config {path} ({len(overrides)} override(s)).")
    return config.model_copy(update={"paths": resolved})


def config_hash(config: PipelineConfig) -> str:
    """sha256 of the canonical JSON form of the validated config."""
    return sha256(dumps(config.model_dump(mode="json"), sort_keys=True).encode("utf-8")).hexdigest()
