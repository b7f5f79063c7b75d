import math

import numpy as np
import pytest

from tgvinterp.metrics import evaluate, mse, psnr, ssim, summarize, write_report, write_table


def test_identical_images():
    x = np.random.default_rng(0).uniform(size=(16, 16))
    m = evaluate(x, x)
    assert m["mse"] == 0.0
    assert math.isinf(m["psnr"])
    assert m["ssim"] == pytest.approx(1.0)


def test_psnr_closed_form():
    ref = np.zeros((10, 10))
    u = np.full((10, 10), 1e-2)
    assert mse(u, ref) == pytest.approx(1e-4)
    assert psnr(u, ref) == pytest.approx(40.0, abs=1e-12)
    assert psnr(2 * u, ref, peak=2.0) == pytest.approx(40.0, abs=1e-12)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        mse(np.zeros((3, 3)), np.zeros((3, 4)))


def test_ssim_matches_scikit_image():
    metrics = pytest.importorskip("skimage.metrics")
    r = np.random.default_rng(1)
    ref = r.uniform(size=(48, 40))
    u = np.clip(ref + 0.1 * r.standard_normal(ref.shape), 0, 1)
    expected = metrics.structural_similarity(u, ref, data_range=1.0, gaussian_weights=True, sigma=1.5, use_sample_covariance=False)
    assert ssim(u, ref) == pytest.approx(expected, abs=1e-6)


def test_reports(tmp_path):
    rows = [("a", evaluate(np.zeros((12, 12)), np.full((12, 12), 0.1))), ("b", evaluate(np.ones((12, 12)), np.ones((12, 12))))]
    write_report(tmp_path / "r.csv", rows)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "image_id,psnr,mse,ssim"
    assert lines[2].startswith("b,inf,0.0,")
    table = {"x": summarize(rows[:1])}
    write_table(tmp_path / "t.csv", table)
    assert (tmp_path / "t.csv").read_text().splitlines()[1].startswith("x,20.0")
