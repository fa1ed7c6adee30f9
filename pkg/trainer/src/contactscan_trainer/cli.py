"""Command line: train a predictor on a dataset directory, then emit
prediction files for the evaluator."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import TrainConfig
from .train import Checkpoint, predict, train


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="contactscan-trainer")
    sub = p.add_subparsers(dest="command", required=True)

    pt = sub.add_parser("train", help="train a predictor")
    pt.add_argument("--dataset", required=True)
    pt.add_argument("--out", required=True)
    pt.add_argument("--model", choices=("voxnet", "pointnet"),
                    default="voxnet")
    pt.add_argument("--strategy", choices=("smcl", "diversenet"),
                    default="smcl")
    pt.add_argument("--k", type=int, default=10)
    pt.add_argument("--epochs", type=int, default=10)
    pt.add_argument("--lr", type=float, default=0.1)
    pt.add_argument("--seed", type=int, default=0)

    pp = sub.add_parser("predict", help="write prediction files")
    pp.add_argument("--checkpoint", required=True)
    pp.add_argument("--dataset", required=True)
    pp.add_argument("--out", required=True)
    pp.add_argument("--split", default="test")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            config = TrainConfig(model=args.model, strategy=args.strategy,
                                 k=args.k, epochs=args.epochs, lr=args.lr,
                                 seed=args.seed)
            train(config, args.dataset, args.out)
        else:
            ckpt = Checkpoint.load(Path(args.checkpoint))
            predict(ckpt, args.dataset, args.out, split=args.split or None)
        return 0
    except (FileNotFoundError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
