"""Basis recovery against noise level: principal angle and Train VE gap to the analytic optimum.

    python scripts/run_recovery.py --out runs/recovery
"""

import argparse
import csv
from pathlib import Path

import numpy as np
from scipy.linalg import subspace_angles

from _common import run
from aucoder.io import BUILTIN_TEMPLATE_MAPS, read_json
from aucoder.pca import PcaModel
from aucoder.synth import SynthConfig, noise_limited_ve, true_basis, write_dataset


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--subjects", type=int, default=40)
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--noise", default="0,0.001,0.01,0.05,0.1,0.3")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    rows = []
    for noise in (float(v) for v in args.noise.split(",")):
        cfg = SynthConfig(n_subjects=args.subjects, frames_per_subject=args.frames, noise=noise, seed=args.seed)
        d = args.out / f"noise_{noise:g}"
        manifest = write_dataset(d / "data", "ckplus", cfg)
        run("preprocess", "--manifest", manifest, "--out", d / "features")
        run("fit", "--features", d / "features" / "features.csv", "--k", cfg.n_bases, "--out", d / "model")
        model = PcaModel.load(d / "model" / "model.csv")
        angle = float(np.degrees(np.max(subspace_angles(model.basis, true_basis(cfg.n_bases, cfg.seed)))))
        ve = read_json(d / "model" / "model.csv.json")["train_ve"]
        opt = noise_limited_ve(cfg, BUILTIN_TEMPLATE_MAPS["ckplus"].mask)
        rows.append([noise, angle, ve, opt])
        print(f"noise {noise:<6g} max angle {angle:6.2f} deg  Train VE {ve:8.4f}  optimum {opt:8.4f}")
    with open(args.out / "recovery.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["noise", "max_angle_deg", "train_ve", "noise_limited_ve"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
