"""Command-line parsing and subcommand dispatch."""

import argparse
import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from .. import __version__
from ..core.config import load_run_config
from ..core.errors import EXIT_OK, IcgraspError, exit_code_for
from ..core.logs import configure_logging
from ..core.settings import settings
from ..pipeline.declutter import cmd_eval_grasp
from ..pipeline.generate import cmd_gen
from ..pipeline.reconstruction import cmd_eval_recon, cmd_reconstruct
from ..pipeline.trainer import cmd_train

logger = logging.getLogger(__name__)

# each command takes the run config loaded for its own name
COMMANDS: Dict[str, Callable[[Any], Any]] = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval-grasp": cmd_eval_grasp,
    "eval-recon": cmd_eval_recon,
    "reconstruct": cmd_reconstruct,
}

HELP = {
    "gen": "generate a labeled synthetic dataset",
    "train": "train the instance network on a dataset",
    "eval-grasp": "run the declutter evaluation",
    "eval-recon": "evaluate scene reconstruction",
    "reconstruct": "segment a point cloud and export meshes",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icgrasp",
        description="Instance-centric grasping and reconstruction from point clouds.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="override ICGRASP_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", type=Path, default=None, help="JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", type=Path, default=None, help="override the output directory")
        p.add_argument("--workers", type=int, default=None, help="override the worker count")
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one subcommand and return its exit code.

    Errors are logged and mapped onto exit codes: 2 for config errors, 3 for data and I/O
    errors, 4 for violated invariants.
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        settings.ensure_dirs()
        cfg = load_run_config(args.command, args.config, args.seed, args.out, args.workers)
        logger.info("starting", extra={"command": args.command, "out": str(cfg.out)})
        COMMANDS[args.command](cfg)
    except Exception as e:
        code = exit_code_for(e)
        expected = isinstance(e, (IcgraspError, OSError))
        logger.error(
            "%s failed: %s", args.command, e, exc_info=not expected, extra={"exit_code": code}
        )
        return code
    logger.info("finished", extra={"command": args.command})
    return EXIT_OK
