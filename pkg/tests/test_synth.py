import re

import numpy as np
import pytest

from aucoder.features import build_features
from aucoder.geometry import BUILTIN_ANCHOR_SETS, register_frame
from aucoder.io import BUILTIN_TEMPLATE_MAPS, load_frames, load_manifest
from aucoder.metrics import variance_explained
from aucoder.svg import component_figure, line_chart
from aucoder.synth import (
    ANCHOR_KEYPOINTS,
    SynthConfig,
    expected_signal_energy,
    generate_frames,
    noise_limited_ve,
    noise_std,
    true_basis,
)


def test_true_basis_orthonormal_and_off_anchors():
    U = true_basis(8, 0)
    np.testing.assert_allclose(U.T @ U, np.eye(8), atol=1e-12)
    anchor_rows = np.repeat(np.isin(np.arange(68), ANCHOR_KEYPOINTS), 2)
    assert not U[anchor_rows].any()


def test_noise_energy_fraction():
    cfg = SynthConfig()
    d = 2 * (68 - len(ANCHOR_KEYPOINTS))
    assert d * noise_std(cfg) ** 2 == pytest.approx(0.01 * expected_signal_energy(cfg))


def test_noise_limited_ve_limits():
    assert noise_limited_ve(SynthConfig(noise=0.0)) == pytest.approx(100)
    cfg = SynthConfig()
    assert 98.9 < noise_limited_ve(cfg) < 99.1
    assert noise_limited_ve(cfg, BUILTIN_TEMPLATE_MAPS["bp4d"].mask) < 100


def test_generation_deterministic():
    cfg = SynthConfig(seed=5)
    a = list(generate_frames(cfg))
    b = list(generate_frames(cfg))
    for (sa, na, fa, wa), (sb, nb, fb, wb) in zip(a, b):
        assert (sa, na) == (sb, nb)
        np.testing.assert_array_equal(np.array(fa), np.array(fb))
        np.testing.assert_array_equal(wa, wb)


def test_weights_sparse():
    for _, neutral, _, W in generate_frames(SynthConfig(n_subjects=4, frames_per_subject=6)):
        counts = np.count_nonzero(W, axis=0)
        assert counts[neutral] == 0
        assert all(c == 3 for i, c in enumerate(counts) if i != neutral)


def test_noiseless_registration_recovers_signal(tmp_path):
    # without jitter, registered features are exactly U @ w
    from aucoder.synth import write_dataset

    cfg = SynthConfig(noise=0.0, seed=2)
    manifest = load_manifest(write_dataset(tmp_path, "ckplus", cfg))
    frames = [register_frame(f, BUILTIN_ANCHOR_SETS["disfa_ck"]) for f in load_frames(manifest, BUILTIN_TEMPLATE_MAPS["ckplus"])]
    X = build_features(frames, manifest)
    U = true_basis(8, 2)
    W = np.column_stack(
        [W[:, j] for _, n, _, W in generate_frames(cfg) for j in range(W.shape[1]) if j != n]
    )
    np.testing.assert_allclose(X.data, U @ W, atol=1e-9)


def test_noise_limited_ve_monte_carlo():
    # true-basis projection of many noisy frames approaches the analytic value
    cfg = SynthConfig(n_subjects=60, frames_per_subject=20, seed=11)
    U = true_basis(cfg.n_bases, cfg.seed)
    sigma = noise_std(cfg)
    rng = np.random.default_rng(0)
    cols = []
    rows = np.repeat(~np.isin(np.arange(68), ANCHOR_KEYPOINTS), 2)
    for _, n, _, W in generate_frames(cfg):
        for j in range(W.shape[1]):
            if j != n:
                cols.append(U @ W[:, j] + np.where(rows, sigma * rng.standard_normal(136), 0.0))
    X = np.column_stack(cols)
    ve = variance_explained(X, U @ (U.T @ X)).value
    assert ve == pytest.approx(noise_limited_ve(cfg), abs=0.05)


def test_suite_layout(mini_suite):
    assert len(list((mini_suite / "au" / "pure").glob("*.csv"))) == 26
    assert len(list((mini_suite / "au" / "comb").glob("*.csv"))) == 113
    for layout, n in (("disfa", 66), ("bp4d", 49), ("ckplus", 68)):
        f = next((mini_suite / layout).glob("*/frame_0000.csv"))
        assert len(f.read_text().splitlines()) == n


def test_line_chart_deterministic_and_escaped():
    s = [("a<b", [1, 10, 100], [0.0, 50.0, 100.0])]
    a = line_chart(s, title="x & y", log_x=True)
    assert a == line_chart(s, title="x & y", log_x=True)
    assert "a&lt;b" in a and "x &amp; y" in a
    with pytest.raises(ValueError, match="positive"):
        line_chart([("z", [0, 1], [1, 2])], log_x=True)


def test_line_chart_log_axis_spacing():
    svg = line_chart([("s", [1, 10, 100], [1, 2, 3])], log_x=True)
    pts = re.findall(r'<circle cx="([^"]+)"', svg)
    x = [float(v) for v in pts]
    assert x[1] - x[0] == pytest.approx(x[2] - x[1], abs=1e-2)


def test_component_figure_mask():
    mask = BUILTIN_TEMPLATE_MAPS["bp4d"].mask
    svg = component_figure(np.zeros((68, 2)), np.zeros((68, 2)), mask)
    assert svg.count('class="arrow"') == 49
    assert svg.count('class="neutral"') == 49
