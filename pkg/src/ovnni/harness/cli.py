"""Command line interface.

Exit codes: 0 on success, 2 on configuration problems, 3 on runtime failures.
"""

from __future__ import annotations

import argparse
import sys

from ..errors import ConfigError
from .config import load_config
from .runner import cmd_eval, cmd_synth, cmd_toy3, cmd_train

COMMANDS = {
    "train": (cmd_train, "train the models the configured methods need"),
    "eval": (cmd_eval, "evaluate every configured method on test + OOD data"),
    "toy3": (cmd_toy3, "3-class experiment with the remaining classes as OOD"),
    "synth": (cmd_synth, "generate synthetic IDX datasets for self-tests"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ovnni",
        description="One-vs-all / all-vs-all fusion experiments: training, "
                    "evaluation and report generation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--seed", type=int, default=None,
                       help="override the training seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--fast", action="store_true",
                       help="fast mode: subsampled data and few epochs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, seed=args.seed, output_dir=args.out,
                             fast=args.fast)
        result = COMMANDS[args.command][0](config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - map anything else to exit 3
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 3
    _summarize(args.command, config, result)
    return 0


def _summarize(command, config, result) -> None:
    if command == "train":
        print(f"trained {len(result.seeds)} model(s) into {config.output_dir}")
    elif command == "eval":
        print(f"evaluated {len(result)} method(s); tables in {config.output_dir}")
        for method, report in result.items():
            print(f"  {method}: accuracy={report.accuracy:.4f} ece={report.ece:.4f} "
                  f"auc_ood={report.auc_ood:.4f} fpr95={report.fpr95:.4f}")
    elif command == "toy3":
        summary = result["summary"]
        print(f"toy3 artifacts in {config.output_dir / 'toy3'}")
        if "ovnni_median_conf_id" in summary:
            print(f"  fused median confidence: id={summary['ovnni_median_conf_id']:.4f} "
                  f"ood={summary['ovnni_median_conf_ood']:.4f}")
    elif command == "synth":
        print(f"wrote {len(result['paths'])} IDX files into {config.output_dir}")


if __name__ == "__main__":
    sys.exit(main())
