"""Discrete TGV values of a fixed smooth field on refined grids.

For an affine field every level is zero.  For an affine field plus a
sine pattern the values settle as the grid is refined; the ratio of
successive differences indicates the rate.  The boundary handling is
Neumann-type, so this is an empirical trend and not a certificate.
"""

from tgvinterp import handcrafted_bank
from tgvinterp.consistency import refinement_ladder, successive_differences

banks = (handcrafted_bank("K1"), handcrafted_bank("L3"))
alpha = (0.1, 0.2)

for field in ("affine", "affine_plus_sine"):
    levels = refinement_ladder(field, alpha, banks, Ns=(16, 32, 64))
    print(field)
    for lv in levels:
        print(f"  N={lv.N:3d}  value={lv.value:.6f}  residual={lv.residual:.1e}")
    diffs = successive_differences(levels)
    if diffs[0] > 0:
        print("  ratios:", [round(b / a, 3) for a, b in zip(diffs, diffs[1:])])
