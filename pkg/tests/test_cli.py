import json

import numpy as np
import pytest

from tgvinterp.cli import main, resolve_banks
from tgvinterp.data import load_image, read_manifest, save_image
from tgvinterp.interp import handcrafted_bank


@pytest.fixture
def noisy_png(tmp_path):
    r = np.random.default_rng(0)
    x = np.clip(np.linspace(0.2, 0.8, 16)[:, None] + 0.05 * r.standard_normal((16, 16)), 0, 1)
    path = tmp_path / "f.png"
    save_image(x, path)
    return path


def test_denoise_runs_and_writes_manifest(tmp_path, noisy_png):
    out = tmp_path / "o" / "u.png"
    code = main(["denoise", "--in", str(noisy_png), "--bank", "handcrafted:L3K1", "--iters", "200",
                 "--out", str(out), "--ref", str(noisy_png)])
    assert code == 0
    assert load_image(out).shape == (16, 16)
    man = json.loads((out.parent / "run_manifest.json").read_text())
    assert man["command"] == "denoise" and "u.png" in man["outputs"] and "u.csv" in man["outputs"]
    assert set(man["banks"]) == {"K", "L"}


def test_denoise_with_zero_weight_returns_input(tmp_path, noisy_png):
    out = tmp_path / "u.png"
    assert main(["denoise", "--in", str(noisy_png), "--bank", "identity", "--alpha1", "0", "--out", str(out)]) == 0
    assert np.array_equal(load_image(out).data, load_image(noisy_png).data)


def test_exit_codes(tmp_path, noisy_png, capsys):
    out = str(tmp_path / "u.png")
    assert main(["denoise", "--in", str(noisy_png), "--bank", str(tmp_path / "missing"), "--out", out]) == 3
    assert "not found" in capsys.readouterr().err
    assert main(["denoise", "--in", str(tmp_path / "none.png"), "--out", out]) == 3
    assert main(["denoise", "--in", str(noisy_png), "--bank", "handcrafted:X9", "--out", out]) == 2
    assert main(["denoise", "--in", str(noisy_png), "--alpha1", "-1", "--out", out]) == 2
    assert main(["denoise"]) == 2
    assert main(["nonsense"]) == 2


def test_bank_specs(tmp_path):
    K, L = resolve_banks("handcrafted:L4K4")
    assert K.n == 4 and L.n == 4
    handcrafted_bank("K1").save(tmp_path / "best_K.json")
    handcrafted_bank("L3").save(tmp_path / "best_L.json")
    K, L = resolve_banks(str(tmp_path))
    assert (K.n, L.n) == (1, 3)
    K, L = resolve_banks(f"{tmp_path / 'best_K.json'},{tmp_path / 'best_L.json'}")
    assert L.n == 3


def test_gen_data_synthetic_layout(tmp_path):
    out = tmp_path / "data"
    assert main(["gen-data", "--kind", "synthetic", "--count", "3", "--size", "32", "--seed", "7",
                 "--sigma", "12.75", "--out", str(out)]) == 0
    entries = read_manifest(out / "manifest.json")
    assert len(entries) == 3
    img = load_image(out / entries[0][0])
    assert img.shape == (32, 32)


def test_gen_data_natural_needs_source(tmp_path):
    assert main(["gen-data", "--kind", "natural", "--out", str(tmp_path / "d")]) == 2


def test_config_file_and_flag_precedence(tmp_path, noisy_png):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"iters": 30, "bank": "identity", "alpha1": 0.05}))
    out = tmp_path / "u.png"
    assert main(["denoise", "--config", str(cfg), "--in", str(noisy_png), "--out", str(out), "--alpha1", "0.07"]) == 0
    args = json.loads((tmp_path / "run_manifest.json").read_text())["args"]
    assert args["iters"] == 30 and args["bank"] == "identity" and args["alpha1"] == 0.07
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["denoise", "--config", str(cfg), "--in", str(noisy_png), "--out", str(out)]) == 2


def test_consistency_affine_ladder_is_zero(tmp_path, capsys):
    out = tmp_path / "c"
    assert main(["consistency", "--field", "affine", "--Ns", "16,32", "--iters", "200", "--out", str(out)]) == 0
    rows = (out / "ladder_affine.csv").read_text().splitlines()[1:]
    assert len(rows) == 2
    assert all(float(r.split(",")[2]) <= 1e-12 for r in rows)
    assert "Neumann" in (out / "ladder_affine.txt").read_text()


def _run_and_collect(argv, outdir):
    assert main(argv) == 0
    return {p.name: p.read_bytes() for p in sorted(outdir.rglob("*")) if p.is_file()}


def test_eval_twice_gives_identical_csv(tmp_path):
    data = tmp_path / "data"
    main(["gen-data", "--count", "2", "--size", "16", "--sigma", "10", "--out", str(data)])
    argv = ["eval", "--data", str(data / "manifest.json"), "--iters", "100", "--out", str(tmp_path / "e")]
    first = _run_and_collect(argv, tmp_path / "e")
    second = _run_and_collect(argv, tmp_path / "e")
    assert first == second
    assert set(first) >= {"standard.csv", "handcrafted.csv", "table.csv", "run_manifest.json"}
