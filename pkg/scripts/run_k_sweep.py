"""Train on one layout, test on the other two, for every k (the k-selection experiment).

    python scripts/run_k_sweep.py --out runs/k_sweep --subjects 20 --frames 12

Writes ``<out>/sweep_<train>/sweep_k.{csv,svg}`` per training layout and a
``<out>/summary.csv`` with the k reaching 95% Train VE.
"""

import argparse
import csv
from pathlib import Path

from _common import LAYOUTS, prepare, run


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--subjects", type=int, default=20)
    p.add_argument("--frames", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-ve", type=float, default=95.0)
    args = p.parse_args()

    feats = prepare(args.out, args.subjects, args.frames, args.seed)
    summary = []
    for train in LAYOUTS:
        tests = [feats[t] for t in LAYOUTS if t != train]
        run("sweep-k", "--train", feats[train], "--test", *tests, "--out", args.out / f"sweep_{train}")
        with open(args.out / f"sweep_{train}" / "sweep_k.csv") as fh:
            rows = list(csv.DictReader(fh))
        hit = next((r for r in rows if float(r["train_ve"]) >= args.target_ve), rows[-1])
        summary.append([train, hit["k"], hit["train_ve"], hit["mean_test_ve"]])
        print(f"{train:7s} k={hit['k']:>3s}  Train VE {float(hit['train_ve']):.2f}  mean Test VE {float(hit['mean_test_ve']):.2f}")
    with open(args.out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["train", "k", "train_ve", "mean_test_ve"])
        w.writerows(summary)


if __name__ == "__main__":
    main()
