"""``aucoder`` batch command line.

Subcommands: preprocess, fit, sweep-k, encode, compare, render, synth.
Every artifact gets a JSON sidecar carrying the seed and a hash of the
command's configuration.  Log level comes from ``AUCODER_LOG``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .features import AuDictionary, FeatureMatrix, build_au_dictionary, build_features, sidecar_path, subsample_columns
from .geometry import TEMPLATE_POINTS, load_anchor_set, register_frame
from .io import (
    N_KEYPOINTS,
    load_au_dictionary,
    load_frames,
    load_manifest,
    load_template_map,
    read_json,
    read_keypoint_file,
    write_json,
    write_matrix_csv,
)
from .pca import PcaModel, fit_pca, project, select_k
from .sparse import LarsConfig, encode_matrix, sweep_budget
from .svg import component_figure, line_chart
from .synth import SynthConfig, write_synthetic_suite

log = logging.getLogger("aucoder")


def config_hash(args: argparse.Namespace) -> str:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "out")}
    blob = json.dumps(cfg, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _provenance(args) -> dict:
    return {"command": args.command, "config_hash": config_hash(args), "seed": args.seed, "aucoder_version": __version__}


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def parse_int_list(text: str) -> list[int]:
    """``"1,2,5"`` or ``"1:10"`` (inclusive) or a mix: ``"1:4,8,16"``."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            lo, hi = part.split(":")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def load_dictionary(path: str | Path):
    """A fitted PCA model or an AU dictionary, by its sidecar's ``type``."""
    path = Path(path)
    if path.suffix == ".json" and path.name.endswith(".csv.json"):
        path = path.with_name(path.name[: -len(".json")])
    kind = read_json(sidecar_path(path)).get("type")
    if kind == "pca_model":
        return PcaModel.load(path)
    if kind == "au_dictionary":
        return AuDictionary.load(path)
    raise ValueError(f"{path}: not a PCA model or AU dictionary (type={kind!r})")


def _dictionary_name(path: str, dictionary) -> str:
    if isinstance(dictionary, PcaModel):
        return f"PCA AUs ({Path(path).parent.name}, k={dictionary.k})"
    return f"{dictionary.kind} AUs ({dictionary.c})"


def cmd_preprocess(args) -> int:
    out = _out_dir(args)
    if args.au_files:
        au = load_au_dictionary(args.au_files, args.au_neutral)
        anchors = load_anchor_set(args.anchors or "disfa_ck")
        dictionary = build_au_dictionary(au, anchors, kind=args.kind)
        dictionary.save(out / "dictionary.csv", {**_provenance(args), "anchor_set": anchors.name})
        log.info("wrote %d-column %s dictionary to %s", dictionary.c, dictionary.kind, out)
        return 0
    if not args.manifest:
        raise ValueError("preprocess needs --manifest or --au-files")
    manifest = load_manifest(args.manifest)
    tmap = load_template_map(args.template_map or manifest.template_map_id)
    anchors = load_anchor_set(args.anchors or manifest.anchor_set_id)
    frames = load_frames(manifest, tmap)
    registered = [register_frame(f, anchors) for f in frames]
    X = build_features(registered, manifest)
    if args.subsample:
        X = subsample_columns(X, args.subsample, args.seed)
    X.save(
        out / "features.csv",
        {**_provenance(args), "anchor_set": anchors.name, "template_map": tmap.dataset_id},
    )
    log.info("wrote %dx%d features to %s", X.data.shape[0], X.m, out)
    return 0


def cmd_fit(args) -> int:
    out = _out_dir(args)
    X = FeatureMatrix.load(args.features)
    full = fit_pca(X)
    extra = _provenance(args)
    if args.target_ve is not None:
        k = select_k(full, args.target_ve)
        extra.update({"target_ve": args.target_ve, "selected_k": k})
    else:
        k = args.k
    model = full.truncate(k)
    extra["train_ve"] = float(model.spectrum_ve()[k - 1])
    model.save(out / "model.csv", extra)
    log.info("fitted k=%d, Train VE %.4f", k, extra["train_ve"])
    return 0


def _write_table(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format(v, ".10g") if isinstance(v, float) else v for v in row])


def _svg_with_hash(svg: str, args) -> str:
    return svg.replace("\n", f"\n<!-- config_hash {config_hash(args)} -->\n", 1)


def cmd_sweep_k(args) -> int:
    out = _out_dir(args)
    X = FeatureMatrix.load(args.train)
    tests = [FeatureMatrix.load(p) for p in args.test]
    names = [t.dataset_id or Path(p).parent.name for t, p in zip(tests, args.test)]
    full = fit_pca(X)
    ks = [k for k in parse_int_list(args.k_range) if 1 <= k <= full.k]
    if not ks:
        raise ValueError(f"no k in {args.k_range!r} within 1..{full.k}")
    rows = []
    for k in ks:
        model = full.truncate(k)
        train = project(model, X).test_ve().value
        per_test = [project(model, t).test_ve().value for t in tests]
        rows.append([k, train, float(np.mean(per_test)), *per_test])
    header = ["k", "train_ve", "mean_test_ve", *[f"test_ve[{n}]" for n in names]]
    _write_table(out / "sweep_k.csv", header, rows)
    write_json({**_provenance(args), "train": args.train, "test": list(args.test)}, out / "sweep_k.csv.json")
    svg = line_chart(
        [("Train VE", ks, [r[1] for r in rows]), ("mean Test VE", ks, [r[2] for r in rows])],
        title=f"PCA trained on {X.dataset_id or Path(args.train).parent.name}",
        x_label="k",
        y_label="VE (%)",
        log_x=True,
    )
    (out / "sweep_k.svg").write_text(_svg_with_hash(svg, args))
    return 0


def cmd_encode(args) -> int:
    out = _out_dir(args)
    Y = FeatureMatrix.load(args.features)
    dictionary = load_dictionary(args.dictionary)
    code = encode_matrix(Y, dictionary, LarsConfig(args.budget, args.ridge, normalize_columns=args.normalize))
    write_matrix_csv(code.weights, out / "code.csv")
    write_json({**code.sidecar(), **_provenance(args)}, out / "code.csv.json")
    log.info("encoded %d samples, MC %.3f, Test VE %.4f", Y.m, code.mc, code.test_ve().value)
    return 0


def cmd_compare(args) -> int:
    out = _out_dir(args)
    Y = FeatureMatrix.load(args.test)
    budgets = sorted(set(parse_int_list(args.budgets)))
    rows, series = [], []
    for path in args.dictionaries:
        dictionary = load_dictionary(path)
        name = _dictionary_name(path, dictionary)
        usable = [b for b in budgets if b <= dictionary.columns.shape[1]]
        if not usable:
            raise ValueError(f"{path}: no budget within 1..{dictionary.columns.shape[1]}")
        table = sweep_budget(Y, dictionary, usable, args.ridge, args.normalize)
        rows.extend([name, r.budget, r.realized_mc, r.test_ve] for r in table)
        xs = [max(r.realized_mc, 1e-3) for r in table]
        series.append((name, xs, [r.test_ve for r in table]))
    _write_table(out / "compare.csv", ["dictionary", "budget", "realized_mc", "test_ve"], rows)
    write_json(
        {**_provenance(args), "test": args.test, "dictionaries": list(args.dictionaries), "ridge": args.ridge},
        out / "compare.csv.json",
    )
    svg = line_chart(
        series,
        title=f"Test VE on {Y.dataset_id or Path(args.test).parent.name}",
        x_label="mean components",
        y_label="Test VE (%)",
        log_x=True,
    )
    (out / "compare.svg").write_text(_svg_with_hash(svg, args))
    return 0


def cmd_render(args) -> int:
    out = _out_dir(args)
    model = load_dictionary(args.model)
    neutral = TEMPLATE_POINTS if args.neutral is None else read_keypoint_file(args.neutral, N_KEYPOINTS)
    mask = np.asarray(model.row_mask, dtype=bool)[::2]
    c = model.columns.shape[1]
    indices = parse_int_list(args.indices) if args.indices else list(range(1, c + 1))
    for i in indices:
        if not 1 <= i <= c:
            raise ValueError(f"component index {i} outside 1..{c}")
    for i in indices:
        disp = model.columns[:, i - 1].reshape(N_KEYPOINTS, 2)
        svg = component_figure(neutral, disp, mask, args.scale, title=f"component {i}")
        (out / f"component_{i:03d}.svg").write_text(_svg_with_hash(svg, args))
    return 0


def cmd_synth(args) -> int:
    out = _out_dir(args)
    cfg = SynthConfig(
        n_subjects=args.subjects, frames_per_subject=args.frames, n_bases=args.bases, noise=args.noise, seed=args.seed
    )
    doc = write_synthetic_suite(out, cfg)
    log.info("wrote synthetic suite to %s (%s)", out, ", ".join(doc["manifests"]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aucoder", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.set_defaults(func=func)
        return sp

    sp = add("preprocess", cmd_preprocess, "register keypoints and build a feature matrix or AU dictionary")
    sp.add_argument("--manifest")
    sp.add_argument("--anchors", help="built-in anchor set id or JSON file (default: manifest's)")
    sp.add_argument("--template-map", help="override the manifest's template map (id or JSON file)")
    sp.add_argument("--subsample", type=int, help="keep this many random columns")
    sp.add_argument("--au-files", nargs="+", help="68-point AU apex keypoint files")
    sp.add_argument("--au-neutral", help="neutral keypoint file for --au-files")
    sp.add_argument("--kind", default="pure", help="dictionary kind label (pure, comb, ...)")

    sp = add("fit", cmd_fit, "fit a PCA AU model")
    sp.add_argument("--features", required=True)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--k", type=int)
    g.add_argument("--target-ve", type=float, help="pick the smallest k reaching this Train VE (percent)")

    sp = add("sweep-k", cmd_sweep_k, "Train VE and mean Test VE over a range of k")
    sp.add_argument("--train", required=True)
    sp.add_argument("--test", nargs="+", required=True)
    sp.add_argument("--k-range", default="1:136")

    sp = add("encode", cmd_encode, "LARS-lasso encode features in a dictionary")
    sp.add_argument("--features", required=True)
    sp.add_argument("--dictionary", required=True, help="model.csv or dictionary.csv")
    sp.add_argument("--budget", type=int, required=True, help="per-sample cap on active components")
    sp.add_argument("--ridge", type=float, default=0.0)
    sp.add_argument("--normalize", action="store_true", help="unit-normalise dictionary columns for selection")

    sp = add("compare", cmd_compare, "Test VE against mean components for several dictionaries")
    sp.add_argument("--test", required=True)
    sp.add_argument("--dictionaries", nargs="+", required=True)
    sp.add_argument("--budgets", default="1:136", help='e.g. "1:10,20,26"; clipped per dictionary')
    sp.add_argument("--ridge", type=float, default=0.0)
    sp.add_argument("--normalize", action="store_true")

    sp = add("render", cmd_render, "draw components as keypoint displacements")
    sp.add_argument("--model", required=True)
    sp.add_argument("--neutral", help="68-point neutral keypoint CSV (default: template face)")
    sp.add_argument("--indices", help="1-based component indices, e.g. 1:8")
    sp.add_argument("--scale", type=float, default=10.0)

    sp = add("synth", cmd_synth, "write a synthetic dataset suite")
    sp.add_argument("--subjects", type=int, default=3)
    sp.add_argument("--frames", type=int, default=5)
    sp.add_argument("--bases", type=int, default=8)
    sp.add_argument("--noise", type=float, default=0.01)
    return p


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("AUCODER_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s"
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        msg = str(exc) if not isinstance(exc, KeyError) else f"missing key {exc}"
        print(f"aucoder {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
