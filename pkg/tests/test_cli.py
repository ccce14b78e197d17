import json

import numpy as np
import pytest

from pivottree.cli import run
from pivottree.data import LabeledDataset
from pivottree.imaging import RasterImage
from pivottree.io import load_model, save_dataset, save_image


@pytest.fixture
def toy(tmp_path, monkeypatch):
    """Two separable blobs written as CSV; outputs go to tmp_path."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("PIVOTTREE_OUTPUT_DIR", raising=False)
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(size=(15, 2)), rng.normal(size=(15, 2)) + 8.0])
    y = np.repeat([0, 1], 15)
    data = LabeledDataset(X, y, ids=[f"c{i}" for i in range(30)], class_names=("benign", "malignant"))
    save_dataset(data, tmp_path / "train.csv")
    return tmp_path


def _fit(path="m.json", *extra):
    assert run(["fit", "train.csv", "-o", path, *extra]) == 0
    return path


def test_no_arguments_is_usage_error(capsys):
    assert run([]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(toy):
    assert run(["fit", "train.csv", "--bogus"]) == 1


def test_bad_data_is_data_error(toy, capsys):
    (toy / "bad.csv").write_text("f0,label\n1,a\nx,b\n")
    assert run(["fit", "bad.csv"]) == 2
    assert "non-numeric" in capsys.readouterr().err


def test_corrupt_model_is_data_error(toy):
    (toy / "m.json").write_text("{")
    assert run(["export-tree", "m.json"]) == 2


def test_fit_then_evaluate_separable(toy, capsys):
    _fit()
    assert run(["evaluate", "m.json", "train.csv", "-o", "ev.csv"]) == 0
    assert "balanced accuracy: 1.0000" in capsys.readouterr().out
    assert (toy / "ev.csv").read_text().splitlines()[-1] == "balanced_accuracy,1.0"


def test_defaults_match_explicit_flags(toy):
    _fit("a.json")
    _fit("b.json", "--min-leaf", "3", "--min-split", "5", "--max-depth", "4")
    a = json.loads((toy / "a.json").read_text())
    b = json.loads((toy / "b.json").read_text())
    assert a == b
    assert a["hyperparams"]["max_depth"] == 4


def test_fit_is_idempotent_and_logged(toy):
    _fit("a.json")
    _fit("b.json")
    assert (toy / "a.json").read_bytes() == (toy / "b.json").read_bytes()
    log = json.loads((toy / "a.json.log.json").read_text())
    assert log["seed"] == 0 and log["argv"][0] == "fit" and log["kernel_backend"] in ("cython", "python")


def test_predict_writes_paths(toy):
    _fit()
    assert run(["predict", "m.json", "train.csv", "-o", "pred.csv"]) == 0
    lines = (toy / "pred.csv").read_text().splitlines()
    assert lines[0] == "row,predicted,decision_path"
    assert lines[1].startswith("c0,benign,") and "<=" in lines[1]


def test_predict_dimension_mismatch(toy):
    _fit()
    (toy / "q.csv").write_text("f0\n1\n")
    assert run(["predict", "m.json", "q.csv"]) == 2


def test_select_pivots(toy):
    _fit()
    assert run(["select-pivots", "m.json", "--pivot-types", "splitting", "-o", "piv.csv"]) == 0
    rows = (toy / "piv.csv").read_text().splitlines()
    assert rows[0] == "id,source_index,label,roles" and len(rows) >= 2
    assert all("used_in_split" in r for r in rows[1:])


def test_model_select(toy):
    args = ["model-select", "train.csv", "--depths", "2,3", "--combos", "both,splitting",
            "--kinds", "PTC,kNN_P", "-o", "grid.csv"]
    assert run(args) == 0
    rows = (toy / "grid.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 2 * 2
    assert run(args[:-1] + ["grid2.csv"]) == 0
    assert (toy / "grid2.csv").read_text() == (toy / "grid.csv").read_text()


def test_bad_grid_name_is_usage_error(toy):
    assert run(["model-select", "train.csv", "--kinds", "SVM"]) == 1


def test_compare_prototypes_embedding(toy):
    _fit()
    (toy / "protos.csv").write_text("id,label,f0,f1\no1,benign,0,0\no2,malignant,8,8\n")
    assert run(["compare-prototypes", "m.json", "protos.csv", "--svg", "h.svg", "-o", "cmp.csv"]) == 0
    head = (toy / "cmp.csv").read_text().splitlines()[0]
    assert head == "euclidean,b:o1,m:o2"
    assert (toy / "h.svg").read_text().startswith("<svg")


def test_compare_prototypes_ssim(toy):
    _fit()
    model = load_model(toy / "m.json")
    imgs = toy / "imgs"
    imgs.mkdir()
    rng = np.random.default_rng(1)
    for p in model.all_pivots:
        save_image(RasterImage(rng.integers(0, 256, size=(12, 12), dtype=np.uint8)), imgs / f"{p.name}.png")
    save_image(RasterImage(rng.integers(0, 256, size=(12, 12, 3), dtype=np.uint8)), toy / "o1.png")
    (toy / "protos.csv").write_text("id,label,image\no1,benign,o1.png\n")
    assert run(["compare-prototypes", "m.json", "protos.csv", "--measure", "ssim", "--images-dir", "imgs",
                "-o", "cmp.csv"]) == 0
    assert run(["compare-prototypes", "m.json", "protos.csv", "--measure", "ssim"]) == 1


def test_export_tree(toy, capsys):
    _fit()
    capsys.readouterr()
    assert run(["export-tree", "m.json", "-o", "-"]) == 0
    assert capsys.readouterr().out.startswith("digraph PivotTree")


def test_output_dir_env(toy, monkeypatch):
    monkeypatch.setenv("PIVOTTREE_OUTPUT_DIR", str(toy / "out"))
    _fit("m.json")
    assert (toy / "out" / "m.json").exists()
