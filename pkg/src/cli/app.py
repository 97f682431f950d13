from argparse import ArgumentParser
from logging import getLogger, basicConfig
from typing import Optional, Sequence

from src.cli.manifest import write_run_manifest
from src.cli.settings import load_config
from src.cli.stages import PIPELINE_ORDER, STAGES, RunContext, run_attribute, run_features
from src.config import LOG_FORMAT, LOG_LEVEL
from src.errors import AttribEncodeError, ConfigurationError
from src.features.types import FEATURE_KINDS
from src.attribution.methods import METHODS
from utils.artifact_manager import ArtifactError, ArtifactManager
from utils.binary_codec import CodecError

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Raised by the argument parser instead of exiting the process."""

    pass


class Parser(ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def build_parser() -> ArgumentParser:
    parser = Parser(prog="attrib-encode", description="Attribution-to-brain encoding pipeline.")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in PIPELINE_ORDER + ["attribute", "pipeline"]:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", required=True, help="Path to the JSON pipeline config.")
        sub.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="Replace a config key (dotted path); repeatable.",
        )
        if name == "features":
            sub.add_argument("--kind", choices=list(FEATURE_KINDS))
        if name in ("features", "attribute"):
            sub.add_argument("--method", choices=METHODS)
    return parser


def run_subcommand(name: str, ctx: RunContext, kind: Optional[str] = None, method: Optional[str] = None) -> None:
    """Run one stage (or every stage for "pipeline") and write its run manifest."""
    stages = PIPELINE_ORDER if name == "pipeline" else [name]
    for stage in stages:
        logger.info(f"Running stage {stage}.")
        if stage == "features":
            artifacts = run_features(ctx, kind, method)
        elif stage == "attribute":
            artifacts = run_attribute(ctx, method)
        else:
            artifacts = STAGES[stage](ctx)
        write_run_manifest(ctx.manager, stage, ctx.config, artifacts)
        logger.info(f"Stage {stage} wrote {len(artifacts)} artifact(s).")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point of `attrib-encode <subcommand> --config <path> [--override key=value]...`.
    Returns:
        int: 0 on success, 1 on a runtime failure, 2 on a usage or config error.
    """
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        logger.error(f"Usage error: {e}")
        return EXIT_USAGE

    manager: Optional[ArtifactManager] = None
    try:
        config = load_config(args.config, args.override)
        manager = ArtifactManager(config.paths.output_dir)
        run_subcommand(
            args.command,
            RunContext(config, manager),
            getattr(args, "kind", None),
            getattr(args, "method", None),
        )
    except ConfigurationError as e:
        logger.error(f"Configuration error: {e}")
        if manager is not None:
            manager.cleanup()
        return EXIT_USAGE
    except (AttribEncodeError, CodecError, ArtifactError) as e:
        logger.error(f"Stage {args.command} failed: {e}")
        if manager is not None:
            manager.cleanup()
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"Unexpected error in stage {args.command}: {e}")
        if manager is not None:
            manager.cleanup()
        return EXIT_RUNTIME
    return EXIT_OK


def cli() -> None:
    raise SystemExit(main())
