"""Test VE against mean components for PCA AUs, pure AUs and comb AUs.

    python scripts/run_compare.py --out runs/compare --train disfa --test bp4d

The PCA model is fitted on ``--train`` at the k reaching ``--target-ve``;
the AU dictionaries come from the synthetic AU apex files.
"""

import argparse
from pathlib import Path

from _common import LAYOUTS, prepare, run


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--subjects", type=int, default=20)
    p.add_argument("--frames", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train", choices=LAYOUTS, default="disfa")
    p.add_argument("--test", choices=LAYOUTS, default="bp4d")
    p.add_argument("--target-ve", type=float, default=95.0)
    p.add_argument("--budgets", default="1:10,12,16,20,26,40,60,113")
    args = p.parse_args()

    feats = prepare(args.out, args.subjects, args.frames, args.seed)
    run("fit", "--features", feats[args.train], "--target-ve", args.target_ve, "--out", args.out / "pca")
    au = args.out / "data" / "au"
    for kind in ("pure", "comb"):
        files = sorted((au / kind).glob("*.csv"))
        run("preprocess", "--au-files", *files, "--au-neutral", au / "neutral.csv", "--kind", kind, "--out", args.out / kind)
    run(
        "compare", "--test", feats[args.test],
        "--dictionaries", args.out / "pca" / "model.csv", args.out / "pure" / "dictionary.csv", args.out / "comb" / "dictionary.csv",
        "--budgets", args.budgets, "--out", args.out / "compare",
    )
    print((args.out / "compare" / "compare.csv").read_text())


if __name__ == "__main__":
    main()
