"""
ReLU Network Unwrapper - command-line entry point
"""
import argparse
import json
import logging
import re
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

# Add the project root to sys.path for proper imports
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from app import __version__
from app.commands.decompose_commands import (
    handle_enumerate,
    handle_region,
    handle_theory,
    handle_tree,
    handle_unwrap,
)
from app.commands.explain_commands import handle_shap
from app.commands.verify_commands import handle_verify
from app.config import get_settings
from app.utils.errors import InputError, UnwrapError

logger = logging.getLogger("app")


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors become InputError so they exit 1 with an error object.

    Values such as "-1,2" or "-0.5;1,3" are read as values, not option flags.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._negative_number_matcher = re.compile(r"^-\.?\d")

    def error(self, message: str):
        raise InputError(f"{self.prog}: {message}")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="relu-unwrap",
        description="Exact local linear models, regions, trees and SHAP values of ReLU networks",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subcommands = parser.add_subparsers(dest="command", required=True)

    unwrap = subcommands.add_parser("unwrap", help="local linear model at an input")
    unwrap.add_argument("--model", required=True)
    unwrap.add_argument("--input", required=True)
    unwrap.add_argument("--eval", action="store_true", help="include network and model outputs at the input")
    unwrap.add_argument("--out")
    unwrap.set_defaults(handler=handle_unwrap)

    region = subcommands.add_parser("region", help="half-space description of an input's region")
    region.add_argument("--model", required=True)
    region.add_argument("--input", required=True)
    region.add_argument("--out")
    region.set_defaults(handler=handle_region)

    tree = subcommands.add_parser("tree", help="exact regression-tree surrogate")
    tree.add_argument("--model", required=True)
    tree.add_argument("--materialize", action="store_true")
    tree.add_argument("--max-leaves", type=int, default=None)
    tree.add_argument("--feasibility", action="store_true", help="flag leaves whose region is empty")
    tree.add_argument("--full", action="store_true", help="serialize the whole tree")
    tree.add_argument("--out")
    tree.set_defaults(handler=handle_tree)

    theory = subcommands.add_parser("theory", help="propositional atoms and region terms")
    theory.add_argument("--model", required=True)
    theory.add_argument("--inputs", required=True)
    theory.add_argument("--text", action="store_true", help="print the theory text without the result file")
    theory.add_argument("--out")
    theory.set_defaults(handler=handle_theory)

    shap = subcommands.add_parser("shap", help="SHAP attribution against a baseline")
    shap.add_argument("--model", required=True)
    shap.add_argument("--input", required=True)
    shap.add_argument("--baseline", required=True)
    shap.add_argument("--mode", choices=["local", "global", "bruteforce"], default="global")
    shap.add_argument("--sample", type=int, default=None, help="permutations when features exceed the cap")
    shap.add_argument("--seed", type=int, default=0)
    shap.add_argument("--out")
    shap.set_defaults(handler=handle_shap)

    enumerate_ = subcommands.add_parser("enumerate", help="census of regions inside a box")
    enumerate_.add_argument("--model", required=True)
    enumerate_.add_argument("--box", nargs=2, metavar=("LO", "HI"), required=True)
    enumerate_.add_argument("--strategy", choices=["sample", "exhaustive"], default="sample")
    enumerate_.add_argument("--count", type=int, default=1000)
    enumerate_.add_argument("--seed", type=int, default=0)
    enumerate_.add_argument("--eps", type=float, default=None)
    enumerate_.add_argument("--out")
    enumerate_.set_defaults(handler=handle_enumerate)

    verify = subcommands.add_parser("verify", help="run the exactness property suite")
    verify.add_argument("--model", required=True)
    verify.add_argument("--samples", type=int, default=500)
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--tol", type=float, default=1e-9)
    verify.add_argument("--out")
    verify.set_defaults(handler=handle_verify)
    return parser


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    configure_logging(get_settings().log_level)
    try:
        args = build_parser().parse_args(argv)
        logger.info("running %s", args.command)
        text, exit_code = args.handler(args)
        if getattr(args, "out", None):
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return exit_code
    except UnwrapError as exc:
        logger.error("%s failed: %s", exc.code, exc.detail)
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return exc.exit_code
    except Exception as exc:
        logger.exception("internal error")
        print(json.dumps({"type": "error", "data": {"code": "internal_error", "message": str(exc)}}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
