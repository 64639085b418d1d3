#!/usr/bin/env python3
"""Manual desk-scale run: dataset -> train -> infer -> evaluate.

Writes everything under the given work directory and prints the baseline
and network overall metrics. Equivalent to the gated test in
``tests/test_toy_improvement.py``.
"""

import argparse
import json
import shutil
import subprocess
import time
from pathlib import Path


def sh(*cmd) -> str:
    proc = subprocess.run(list(cmd), capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"{cmd[0]} failed: {proc.stderr}")
    return proc.stdout


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("workdir")
    parser.add_argument("--scenes", type=int, default=210)
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--seed", type=int, default=600)
    parser.add_argument("--variant", default="stft", choices=("stft", "aud"))
    args = parser.parse_args()

    root = Path(args.workdir)
    root.mkdir(parents=True, exist_ok=True)
    corpus = root / "corpus"
    if not corpus.is_dir():
        from bsmkit.synth import write_corpus

        write_corpus(corpus, n_clips=8, seconds=4.0, seed=2)
    data = root / "data"
    if not (data / "manifest.jsonl").exists():
        t0 = time.time()
        print(sh(
            "bsmkit", "dataset", "--seed", str(args.seed), "--scenes", str(args.scenes),
            "--corpus", str(corpus), "--out", str(data),
        ).strip())
        print(f"dataset: {time.time() - t0:.0f}s")

    from nnharness.data import read_manifest, split_rows
    from nnharness.infer import infer
    from nnharness.train import TrainConfig, train

    run_dir = root / "run"
    t0 = time.time()
    summary = train(
        data, run_dir,
        TrainConfig(epochs=args.epochs, batch_size=8, micro_batch=2,
                    crop_seconds=1.0, loss_variant=args.variant, seed=0),
    )
    print(f"train: {time.time() - t0:.0f}s over {summary['epochs']} epochs, "
          f"{summary['parameters']} parameters")

    est = root / "est"
    infer(run_dir / "best.pt", data, est, split="test")
    baseline_dir = root / "baseline"
    baseline_dir.mkdir(exist_ok=True)
    for row in split_rows(read_manifest(data), "test"):
        shutil.copy(row.input_path, baseline_dir / f"{row.scene_id}.wav")

    for name, est_dir in (("baseline", baseline_dir), ("network", est)):
        sh(
            "bsmkit", "evaluate", "--manifest", str(data), "--est", str(est_dir),
            "--out", str(root / f"rep_{name}"), "--split", "test",
        )
        report = json.loads((root / f"rep_{name}.json").read_text())
        overall = [g for g in report["groups"] if g["group"] == "overall"][0]
        print(f"{name:>8}: si_sdr {overall['si_sdr']:.2f} dB  "
              f"l_ild {overall['l_ild']:.2f}  l_ipd {overall['l_ipd']:.3f}")


if __name__ == "__main__":
    main()
