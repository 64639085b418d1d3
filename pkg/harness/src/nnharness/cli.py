"""Harness command line: train | infer | gate."""

from __future__ import annotations

import argparse
import json
import sys

from .train import TrainConfig, train


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bsm-harness", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--variant", choices=("aud", "stft"), default="aud")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip-gate", action="store_true")

    p = sub.add_parser("infer")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")

    p = sub.add_parser("gate")
    p.add_argument("--manifest", required=True)
    p.add_argument("--items", type=int, default=2)
    p.add_argument("--split", default="all")

    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            cfg = TrainConfig(
                epochs=args.epochs, batch_size=args.batch, lr=args.lr,
                loss_variant=args.variant, seed=args.seed, skip_gate=args.skip_gate,
            )
            summary = train(args.manifest, args.out, cfg)
            print(json.dumps({k: summary[k] for k in ("log", "epochs", "parameters")}))
        elif args.command == "infer":
            from .infer import infer

            print(json.dumps(infer(args.checkpoint, args.manifest, args.out, args.split)))
        else:
            from .conformance import run_gate
            from .data import read_manifest, split_rows
            from pathlib import Path

            rows = split_rows(read_manifest(args.manifest), args.split)[: args.items]
            manifest_dir = (
                Path(args.manifest)
                if Path(args.manifest).is_dir()
                else Path(args.manifest).parent
            )
            print(json.dumps({"worst_rel": run_gate(rows, manifest_dir)}))
        return 0
    except Exception as exc:
        sys.stderr.write(json.dumps({"error": f"{type(exc).__name__}: {exc}"}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
