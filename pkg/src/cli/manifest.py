from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Dict, List

from src.config import FORMAT_VERSION
from src.schemas.pipeline_schema import PipelineConfig
from src.cli.settings import config_hash
from utils.artifact_manager import ArtifactManager

PACKAGES = ["numpy", "scipy", "torch", "scikit-learn", "pandas", "pydantic", "joblib", "cachetools"]


def package_versions() -> Dict[str, str]:
    versions = {}
    for package in PACKAGES:
        try:
            versions[package] = version(package)
        except PackageNotFoundError:
            versions[package] = "unknown"
    return versions


def write_run_manifest(
    manager: ArtifactManager,
    stage: str,
    config: PipelineConfig,
    artifacts: List[Path],
) -> Path:
    """
    manifests/<stage>.json: config hash, seed, package versions and the
    artifacts the stage produced, relative to the output directory.
    """
    root = manager.output_dir.resolve()
    listed = []
    for path in artifacts:
        path = Path(path).resolve()
        listed.append(str(path.relative_to(root)) if path.is_relative_to(root) else str(path))
    manifest = {
        "stage": stage,
        "config_hash": config_hash(config),
        "seed": config.seed,
        "format_version": FORMAT_VERSION,
        "versions": package_versions(),
        "artifacts": sorted(listed),
    }
    return manager.write_json(f"manifests/{stage}.json", manifest)
