import numpy as np
import pytest

from tgvinterp.consistency import (
    FIELDS,
    LadderLevel,
    refinement_ladder,
    rotation_diagnostic,
    sample_test_field,
    successive_differences,
    write_ladder,
    write_rotation_report,
)
from tgvinterp.interp import handcrafted_bank

HAND = (handcrafted_bank("K1"), handcrafted_bank("L3"))


def test_fields_sample_pixel_centres():
    for kind in FIELDS:
        u, h = sample_test_field(kind, 16)
        assert u.shape == (16, 16) and h == 1 / 16
    u16, _ = sample_test_field("affine", 16)
    u32, _ = sample_test_field("affine", 32)
    # the fine grid averages back onto the coarse one for an affine field
    assert np.allclose(u32.reshape(16, 2, 16, 2).mean(axis=(1, 3)), u16)
    with pytest.raises(ValueError):
        sample_test_field("spiral", 16)
    with pytest.raises(ValueError):
        sample_test_field("affine", 4)


def test_affine_ladder_vanishes():
    levels = refinement_ladder("affine", (0.1, 0.2), HAND, Ns=(16, 32), iters=100)
    assert [lv.N for lv in levels] == [16, 32]
    assert all(lv.value <= 1e-12 and not lv.flagged for lv in levels)


def test_ladder_needs_increasing_sizes():
    with pytest.raises(ValueError):
        refinement_ladder("affine", (0.1, 0.2), HAND, Ns=(32, 16))


def test_successive_differences_and_reports(tmp_path):
    levels = [LadderLevel(N, 1 / N, v, 0.0, v, False) for N, v in ((16, 1.0), (32, 1.5), (64, 1.75))]
    assert successive_differences(levels) == [0.5, 0.25]
    write_ladder(tmp_path / "l.csv", levels, kind="test", alpha=(0.1, 0.2))
    text = (tmp_path / "l.txt").read_text()
    assert "ratios of successive differences: 0.500" in text
    assert len((tmp_path / "l.csv").read_text().splitlines()) == 4


def test_rotation_diagnostic_reports(tmp_path):
    u, h = sample_test_field("smooth_bump", 16)
    res = rotation_diagnostic(u, (0.1, 0.2), HAND, iters=200, h=h)
    assert [r.angle for r in res] == [90.0, 180.0, 270.0, 45.0]
    assert all(np.isfinite(r.rms) and r.band == 2 for r in res)
    assert "resampling" in res[-1].note
    write_rotation_report(tmp_path / "r.csv", res, label="hc")
    assert (tmp_path / "r.txt").read_text().startswith("rotation diagnostic hc")
    with pytest.raises(ValueError):
        rotation_diagnostic(u[:, :8], (0.1, 0.2), HAND)
