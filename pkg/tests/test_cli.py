import csv
import filecmp
import re
import shutil
from pathlib import Path

import numpy as np
import pytest

from aucoder.cli import config_hash, build_parser, main, parse_int_list
from aucoder.features import AuDictionary, FeatureMatrix
from aucoder.io import read_json, read_matrix_csv
from aucoder.pca import PcaModel

BUNDLED = Path(__file__).resolve().parents[1] / "data" / "mini"


def run(*argv):
    return main([str(a) for a in argv])


def table(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def save_features(path, data, name="x"):
    path.parent.mkdir(parents=True, exist_ok=True)
    FeatureMatrix(data, np.ones(136, dtype=bool), tuple(("s", i) for i in range(data.shape[1])), name).save(path)
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipe")
    for layout in ("disfa", "bp4d", "ckplus"):
        assert run("preprocess", "--manifest", BUNDLED / layout / "manifest.json", "--out", out / layout) == 0
    return out


def test_parse_int_list():
    assert parse_int_list("1:4,8") == [1, 2, 3, 4, 8]
    assert parse_int_list("3") == [3]


def test_bundled_data_matches_generator(tmp_path):
    assert run("synth", "--out", tmp_path / "s") == 0
    cmp = filecmp.dircmp(BUNDLED, tmp_path / "s")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    for layout in ("disfa", "bp4d", "ckplus", "au"):
        sub = filecmp.dircmp(BUNDLED / layout, tmp_path / "s" / layout)
        assert not sub.diff_files and not sub.left_only


@pytest.mark.parametrize("layout,rows", [("disfa", 132), ("bp4d", 98), ("ckplus", 136)])
def test_preprocess_bundled_mini(pipeline, layout, rows):
    X = FeatureMatrix.load(pipeline / layout / "features.csv")
    assert X.data.shape == (136, 12)
    assert X.row_mask.sum() == rows
    side = read_json(pipeline / layout / "features.csv.json")
    assert side["seed"] == 0
    assert re.fullmatch(r"[0-9a-f]{16}", side["config_hash"])


def test_preprocess_rerun_byte_identical(pipeline, tmp_path):
    run("preprocess", "--manifest", BUNDLED / "disfa" / "manifest.json", "--out", tmp_path)
    for name in ("features.csv", "features.csv.json"):
        assert (tmp_path / name).read_bytes() == (pipeline / "disfa" / name).read_bytes()


def test_preprocess_missing_frame(tmp_path, capsys):
    shutil.copytree(BUNDLED / "bp4d", tmp_path / "bp4d")
    victim = tmp_path / "bp4d" / "S001" / "frame_0003.csv"
    victim.unlink()
    code = run("preprocess", "--manifest", tmp_path / "bp4d" / "manifest.json", "--out", tmp_path / "o")
    assert code != 0
    assert str(victim) in capsys.readouterr().err
    assert not (tmp_path / "o" / "features.csv").exists()


def test_preprocess_bad_row_reports_file_and_line(tmp_path, capsys):
    shutil.copytree(BUNDLED / "ckplus", tmp_path / "ck")
    bad = tmp_path / "ck" / "S000" / "frame_0002.csv"
    lines = bad.read_text().splitlines()
    lines[6] = "1.0,nan"
    bad.write_text("\n".join(lines) + "\n")
    assert run("preprocess", "--manifest", tmp_path / "ck" / "manifest.json", "--out", tmp_path / "o") == 1
    assert f"{bad}:7" in capsys.readouterr().err


def test_preprocess_subsample_records_seed(tmp_path):
    run("preprocess", "--manifest", BUNDLED / "ckplus" / "manifest.json", "--subsample", 5, "--seed", 7, "--out", tmp_path)
    X = FeatureMatrix.load(tmp_path / "features.csv")
    assert X.m == 5
    assert X.metadata["subsample_seed"] == 7


def test_preprocess_au_dictionary(tmp_path):
    pure = sorted((BUNDLED / "au" / "pure").glob("*.csv"))
    assert len(pure) == 26
    assert run("preprocess", "--au-files", *pure, "--au-neutral", BUNDLED / "au" / "neutral.csv", "--out", tmp_path) == 0
    d = AuDictionary.load(tmp_path / "dictionary.csv")
    assert d.c == 26
    assert d.labels[0] == pure[0].stem


def test_preprocess_au_empty_neutral_missing(tmp_path, capsys):
    pure = sorted((BUNDLED / "au" / "pure").glob("*.csv"))[:2]
    assert run("preprocess", "--au-files", *pure, "--au-neutral", tmp_path / "nope.csv", "--out", tmp_path) == 1
    assert "nope.csv" in capsys.readouterr().err


def test_fit_fixed_k(pipeline, tmp_path):
    assert run("fit", "--features", pipeline / "disfa" / "features.csv", "--k", 8, "--out", tmp_path) == 0
    m = PcaModel.load(tmp_path / "model.csv")
    assert m.basis.shape == (136, 8)


def test_fit_target_100_gives_rank(tmp_path, rng):
    X = rng.standard_normal((136, 5)) @ rng.standard_normal((5, 40))
    f = save_features(tmp_path / "x" / "features.csv", X)
    assert run("fit", "--features", f, "--target-ve", 100, "--out", tmp_path / "m") == 0
    side = read_json(tmp_path / "m" / "model.csv.json")
    assert side["selected_k"] == 5 and side["k"] == 5
    assert side["target_ve"] == 100


def test_fit_target_known_spectrum(tmp_path, rng):
    # energy shares 40, 25, 20, 10, 5: cumulative crosses 95 at k=4
    Q, _ = np.linalg.qr(rng.standard_normal((136, 5)))
    W, _ = np.linalg.qr(rng.standard_normal((30, 5)))
    f = save_features(tmp_path / "x" / "features.csv", Q @ np.diag(np.sqrt([40.0, 25, 20, 10, 5])) @ W.T)
    run("fit", "--features", f, "--target-ve", 95, "--out", tmp_path / "m")
    assert read_json(tmp_path / "m" / "model.csv.json")["selected_k"] == 4


def test_fit_unreachable_target(pipeline, tmp_path, capsys):
    assert run("fit", "--features", pipeline / "disfa" / "features.csv", "--target-ve", 101, "--out", tmp_path) == 1
    assert "maximum achievable" in capsys.readouterr().err


def test_sweep_k_self(pipeline, tmp_path):
    f = pipeline / "ckplus" / "features.csv"
    assert run("sweep-k", "--train", f, "--test", f, "--k-range", "1:12", "--out", tmp_path) == 0
    rows = table(tmp_path / "sweep_k.csv")
    train = np.array([float(r["train_ve"]) for r in rows])
    test = np.array([float(r["mean_test_ve"]) for r in rows])
    np.testing.assert_allclose(train, test, atol=1e-8)
    assert np.all(np.diff(train) >= -1e-9)
    assert train[-1] == pytest.approx(100, abs=1e-8)
    svg = (tmp_path / "sweep_k.svg").read_text()
    assert svg.startswith("<svg") and "config_hash" in svg


def test_sweep_k_cross_dataset(pipeline, tmp_path):
    run(
        "sweep-k", "--train", pipeline / "disfa" / "features.csv",
        "--test", pipeline / "bp4d" / "features.csv", pipeline / "ckplus" / "features.csv",
        "--out", tmp_path,
    )
    rows = table(tmp_path / "sweep_k.csv")
    assert [int(r["k"]) for r in rows] == list(range(1, 13))
    r = rows[3]
    cols = [c for c in r if c.startswith("test_ve[")]
    assert len(cols) == 2
    assert float(r["mean_test_ve"]) == pytest.approx(np.mean([float(r[c]) for c in cols]), abs=1e-8)


def test_encode(pipeline, tmp_path):
    run("fit", "--features", pipeline / "ckplus" / "features.csv", "--k", 6, "--out", tmp_path / "m")
    assert run("encode", "--features", pipeline / "bp4d" / "features.csv", "--dictionary", tmp_path / "m" / "model.csv",
               "--budget", 3, "--out", tmp_path / "e") == 0
    W = read_matrix_csv(tmp_path / "e" / "code.csv")
    assert W.shape == (6, 12)
    assert np.all(np.count_nonzero(W, axis=0) <= 3)
    side = read_json(tmp_path / "e" / "code.csv.json")
    assert side["realized_mc"] <= 3 and side["budget"] == 3


@pytest.fixture(scope="module")
def models(pipeline, tmp_path_factory):
    out = tmp_path_factory.mktemp("models")
    run("fit", "--features", pipeline / "ckplus" / "features.csv", "--k", 8, "--out", out / "pca")
    rng = np.random.default_rng(0)
    Q, _ = np.linalg.qr(rng.standard_normal((136, 8)))
    (out / "rand").mkdir()
    AuDictionary(Q, tuple(f"r{i}" for i in range(8)), np.ones(136, dtype=bool), "random").save(out / "rand" / "dictionary.csv")
    return out


def test_compare_single_full_budget(pipeline, models, tmp_path):
    assert run("compare", "--test", pipeline / "ckplus" / "features.csv", "--dictionaries", models / "pca" / "model.csv",
               "--budgets", "8", "--out", tmp_path) == 0
    rows = table(tmp_path / "compare.csv")
    assert len(rows) == 1
    full = PcaModel.load(models / "pca" / "model.csv").spectrum_ve()[7]
    assert float(rows[0]["test_ve"]) == pytest.approx(full, abs=1e-7)


def test_compare_duplicate_and_dominance(pipeline, models, tmp_path):
    pca = models / "pca" / "model.csv"
    run("compare", "--test", pipeline / "ckplus" / "features.csv",
        "--dictionaries", pca, pca, models / "rand" / "dictionary.csv", "--budgets", "1:8", "--out", tmp_path)
    rows = table(tmp_path / "compare.csv")
    a, b, r = rows[:8], rows[8:16], rows[16:]
    assert [x["test_ve"] for x in a] == [x["test_ve"] for x in b]
    for x, y in zip(a, r):
        assert float(x["realized_mc"]) <= int(x["budget"])
        assert float(x["test_ve"]) > float(y["test_ve"])
    assert (tmp_path / "compare.svg").exists()


def _unit_shift_model(path, column):
    path.parent.mkdir(parents=True, exist_ok=True)
    AuDictionary(column[:, None], ("c",), np.ones(136, dtype=bool), "custom").save(path)
    return path


def _arrows(svg):
    return [tuple(float(v) for v in m) for m in re.findall(r'class="arrow"[^>]*x1="([^"]+)" y1="([^"]+)" x2="([^"]+)" y2="([^"]+)"', svg)]


def test_render_zero_component(tmp_path):
    model = _unit_shift_model(tmp_path / "m" / "dictionary.csv", np.zeros(136))
    assert run("render", "--model", model, "--out", tmp_path / "r") == 0
    arrows = _arrows((tmp_path / "r" / "component_001.svg").read_text())
    assert len(arrows) == 68
    assert all(x1 == x2 and y1 == y2 for x1, y1, x2, y2 in arrows)


def test_render_unit_shift(tmp_path):
    col = np.zeros(136)
    col[2 * 30] = 1.0
    model = _unit_shift_model(tmp_path / "m" / "dictionary.csv", col)
    run("render", "--model", model, "--scale", 10, "--out", tmp_path / "r")
    svg = (tmp_path / "r" / "component_001.svg").read_text()
    lengths = [np.hypot(x2 - x1, y2 - y1) for x1, y1, x2, y2 in _arrows(svg)]
    moving = [v for v in lengths if v > 0]
    assert moving == [pytest.approx(10.0, abs=1e-3)]
    assert 'fill="red"' in svg and 'fill="green"' in svg

    run("render", "--model", model, "--scale", 10, "--out", tmp_path / "r2")
    assert (tmp_path / "r2" / "component_001.svg").read_bytes() == svg.encode()


def test_render_index_out_of_range(models, tmp_path, capsys):
    assert run("render", "--model", models / "pca" / "model.csv", "--indices", "9", "--out", tmp_path) == 1
    assert "outside 1..8" in capsys.readouterr().err


def test_config_hash_ignores_out_but_not_seed():
    p = build_parser()
    a = p.parse_args(["fit", "--features", "f.csv", "--k", "3", "--out", "a"])
    b = p.parse_args(["fit", "--features", "f.csv", "--k", "3", "--out", "b"])
    c = p.parse_args(["fit", "--features", "f.csv", "--k", "3", "--out", "a", "--seed", "1"])
    assert config_hash(a) == config_hash(b) != config_hash(c)


def test_exit_status_matches_error_report(tmp_path, capsys):
    assert run("fit", "--features", tmp_path / "missing.csv", "--k", 2, "--out", tmp_path) == 1
    assert capsys.readouterr().err.startswith("aucoder fit: error:")


def test_model_file_is_plain_csv(models):
    U = read_matrix_csv(models / "pca" / "model.csv")
    np.testing.assert_allclose(U.T @ U, np.eye(8), atol=1e-10)
