"""Command line front end: generate | patchify | analyze | train | report."""

from __future__ import annotations

import argparse
import sys

from . import harness
from .errors import PatchBiasError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchbias",
        description="Synthetic patch-bias pipeline: data, composition analysis, debiased training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the run config JSON")
        p.add_argument(
            "--out", default=None,
            help=f"output root; overrides ${harness.ENV_OUT_ROOT} and the config's out_root",
        )
        p.add_argument("--seed", type=int, default=None, help="override train.seed")
        p.add_argument("--tau", type=float, default=None, help="restrict patch.taus to one threshold")
        p.add_argument("--beta", type=float, default=None, help="fix train.beta instead of tuning")
        p.add_argument("--trials", type=int, default=None, help="override train.trials")
        return p

    add("generate", "render the synthetic image corpus")
    add("patchify", "tile images into labeled patch records")
    analyze = add("analyze", "composition histograms and bias reports")
    analyze.add_argument("--predictions", default=None, help="prediction CSV to overlay on the histograms")
    add("train", "run the full training grid")
    add("report", "assemble the final results table")
    return parser


def _apply_overrides(config: dict, args: argparse.Namespace) -> None:
    if args.seed is not None:
        config["train"]["seed"] = args.seed
    if args.tau is not None:
        config["patch"]["taus"] = [args.tau]
    if args.beta is not None:
        config["train"]["beta"] = args.beta
    if args.trials is not None:
        config["train"]["trials"] = args.trials


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = harness.load_config(args.config)
        _apply_overrides(config, args)
        harness.validate_config(config)
        out_root = harness.resolve_out_root(config, args.out)
        out_root.mkdir(parents=True, exist_ok=True)
        if args.command == "generate":
            harness.cmd_generate(config, out_root)
        elif args.command == "patchify":
            harness.cmd_patchify(config, out_root)
        elif args.command == "analyze":
            harness.cmd_analyze(config, out_root, predictions=args.predictions)
        elif args.command == "train":
            harness.cmd_train(config, out_root)
        else:
            harness.cmd_report(config, out_root)
    except PatchBiasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
