import numpy as np
import pytest
from PIL import Image as PILImage

from tgvinterp.data import (
    MAX_KINK_FRACTION,
    add_gaussian_noise,
    center_crop,
    downsample8,
    gen_synthetic,
    kink_fraction,
    load_image,
    pseudo_ground_truth,
    read_manifest,
    save_image,
    upsample8,
    write_manifest,
)
from tgvinterp.grid import Image


def test_synthetic_set_is_reproducible():
    a = gen_synthetic(7, count=3, size=(32, 32))
    b = gen_synthetic(7, count=3, size=(32, 32))
    c = gen_synthetic(8, count=3, size=(32, 32))
    assert all(np.array_equal(x.data, y.data) for x, y in zip(a, b))
    assert not np.array_equal(a[0].data, c[0].data)


def test_synthetic_images_are_piecewise_affine():
    imgs = gen_synthetic(1, count=4, size=(64, 48))
    for img in imgs:
        assert img.shape == (64, 48)
        assert 0.0 <= img.data.min() and img.data.max() <= 1.0
        assert kink_fraction(img.data) <= MAX_KINK_FRACTION
        # not flat: shapes and ramps are visible
        assert img.data.std() > 0.01


def test_default_dataset_shape():
    imgs = gen_synthetic(7, count=2)
    assert len(imgs) == 2 and imgs[0].shape == (128, 128)


def test_zero_noise_is_identity(rng):
    x = rng.uniform(size=(6, 6))
    assert np.array_equal(add_gaussian_noise(x, 0.0, 3), x)


def test_noise_level_matches_sigma():
    flat = np.full((128, 128), 0.5)
    noisy = add_gaussian_noise(flat, 12.75, 0)
    assert abs(noisy.std(ddof=1) - 12.75 / 255) <= 0.03 * 12.75 / 255


def test_noise_seeds_differ_but_share_mean():
    flat = Image(np.full((128, 128), 0.5))
    a = add_gaussian_noise(flat, 25.5, 1)
    b = add_gaussian_noise(flat, 25.5, 2)
    assert isinstance(a, Image)
    assert not np.array_equal(a.data, b.data)
    bound = 3 * (25.5 / 255) / 128
    assert abs(a.data.mean() - b.data.mean()) <= 2 * bound
    with pytest.raises(ValueError):
        add_gaussian_noise(flat, -1.0, 0)


def test_resampling_preserves_mean(rng):
    x = rng.uniform(size=(5, 7))
    up = upsample8(x)
    assert up.shape == (40, 56)
    assert up.mean() == pytest.approx(x.mean(), rel=1e-14)
    assert np.allclose(downsample8(up), x, atol=1e-15)
    img = upsample8(Image(x, h=1.0), 4)
    assert img.h == 0.25
    with pytest.raises(ValueError):
        downsample8(np.zeros((10, 8)))


def test_pseudo_ground_truth_limits():
    r = np.random.default_rng(0)
    x = r.uniform(size=(6, 6))
    # vanishing regularisation keeps the image
    out = pseudo_ground_truth(x, (1e-6, 1e-6), iters=20000, factor=2)
    assert np.sqrt(np.mean((out - x) ** 2)) <= 1e-4
    const = pseudo_ground_truth(np.full((6, 6), 0.3), (0.1, 0.2), iters=200, factor=2)
    assert np.allclose(const, 0.3, atol=1e-12)


def test_png_round_trip(tmp_path, rng):
    x = rng.uniform(size=(9, 11))
    save_image(x, tmp_path / "a.png")
    back = load_image(tmp_path / "a.png")
    assert np.abs(back.data - x).max() <= 1 / (2**16 - 1)
    save_image(Image(x), tmp_path / "b.png", bits=8)
    assert np.abs(load_image(tmp_path / "b.png").data - x).max() <= 0.5 / 255 + 1e-12


def test_colour_images_need_luma(tmp_path):
    rgb = np.zeros((4, 4, 3), dtype=np.uint8)
    rgb[..., 0] = 255
    PILImage.fromarray(rgb).save(tmp_path / "c.png")
    with pytest.raises(ValueError):
        load_image(tmp_path / "c.png")
    img = load_image(tmp_path / "c.png", luma=True)
    assert np.allclose(img.data, 0.299)


def test_missing_file_is_os_error(tmp_path):
    with pytest.raises(OSError):
        load_image(tmp_path / "nope.png")


def test_center_crop(rng):
    x = rng.uniform(size=(10, 12))
    assert np.array_equal(center_crop(x, 4), x[3:7, 4:8])
    with pytest.raises(ValueError):
        center_crop(x, 11)


def test_manifest_round_trip(tmp_path):
    entries = [("clean/0.png", "noisy/0.png", 12.75, 3), ("clean/1.png", "noisy/1.png", 25.5, 4)]
    write_manifest(tmp_path / "m.json", entries)
    assert read_manifest(tmp_path / "m.json") == entries
