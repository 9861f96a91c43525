"""Shared helpers for the experiment scripts: build a synthetic suite and its feature files."""

from __future__ import annotations

from pathlib import Path

from aucoder.cli import main

LAYOUTS = ("disfa", "bp4d", "ckplus")


def run(*argv) -> None:
    code = main([str(a) for a in argv])
    if code != 0:
        raise SystemExit(code)


def prepare(out: Path, subjects: int, frames: int, seed: int) -> dict[str, Path]:
    """Synthesize all three layouts under ``out/data`` and preprocess each; returns feature paths."""
    run("synth", "--out", out / "data", "--subjects", subjects, "--frames", frames, "--seed", seed)
    feats = {}
    for layout in LAYOUTS:
        run("preprocess", "--manifest", out / "data" / layout / "manifest.json", "--out", out / "features" / layout)
        feats[layout] = out / "features" / layout / "features.csv"
    return feats
