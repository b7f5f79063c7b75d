"""Grid-refinement studies of the discrete TGV value and rotation diagnostics.

The operators use Neumann-type boundary handling while the consistency
theory is formulated on the periodic torus; the harness only observes the
expected convergence trend and does not certify it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import rotate as nd_rotate

from .solver import pd_solve, precondition, tgv_value

FIELDS = ("affine", "affine_plus_sine", "smooth_bump")

# affine part a + b x + c y, sine amplitude s
AFFINE = (0.2, 0.5, 0.3)
SINE_AMPLITUDE = 0.25
BUMP_WIDTH = 0.15

CAVEAT = (
    "Boundary handling is Neumann-type, not periodic; the ladder shows the "
    "empirical refinement trend only and does not certify convergence."
)


def pixel_centers(N: int) -> np.ndarray:
    return (np.arange(N) + 0.5) / N


def sample_test_field(kind: str, N: int) -> tuple[np.ndarray, float]:
    """Sample a closed-form field at the pixel centres of an ``N x N`` grid on (0, 1)^2.

    Returns ``(u, h)`` with ``h = 1 / N``.  Axis 0 is ``x``, axis 1 is ``y``.
    """
    if N < 8:
        raise ValueError("test fields need N >= 8")
    x = pixel_centers(N)
    X, Y = np.meshgrid(x, x, indexing="ij")
    a, b, c = AFFINE
    if kind == "affine":
        u = a + b * X + c * Y
    elif kind == "affine_plus_sine":
        u = a + b * X + c * Y + SINE_AMPLITUDE * np.sin(2 * np.pi * X) * np.sin(2 * np.pi * Y)
    elif kind == "smooth_bump":
        u = np.exp(-((X - 0.5) ** 2 + (Y - 0.5) ** 2) / (2 * BUMP_WIDTH**2))
    else:
        raise ValueError(f"unknown field {kind!r}; choose from {FIELDS}")
    return u, 1.0 / N


@dataclass(frozen=True)
class LadderLevel:
    N: int
    h: float
    value: float
    residual: float
    lower_bound: float
    flagged: bool


def refinement_ladder(kind, alpha, banks, Ns=(16, 32, 64, 128), iters=None, tol=1e-6):
    """``tgv_value`` of a fixed test field on a sequence of refined grids.

    ``iters`` maps ``N`` to an iteration budget (or is a single int);
    by default the budget grows linearly with ``N``.  Unconverged levels are
    flagged and still returned.
    """
    Ns = list(Ns)
    if any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise ValueError("Ns must be increasing")
    levels = []
    for N in Ns:
        u, h = sample_test_field(kind, N)
        if iters is None:
            budget = 400 * N
        elif isinstance(iters, dict):
            budget = iters[N]
        else:
            budget = int(iters)
        res = tgv_value(u, banks, alpha, budget, h=h, tol=tol)
        levels.append(LadderLevel(N, h, res.value, res.residual, res.lower_bound, res.flagged))
    return levels


def successive_differences(levels) -> list[float]:
    vals = [lv.value for lv in levels]
    return [abs(a - b) for a, b in zip(vals, vals[1:])]


def write_ladder(path, levels, *, kind="", alpha=None) -> None:
    """CSV with one row per level plus a text summary next to it (``.txt``)."""
    path = Path(path)
    diffs = successive_differences(levels) + [float("nan")]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "h", "tgv_value", "residual", "lower_bound", "flagged", "diff_to_next"])
        for lv, d in zip(levels, diffs):
            w.writerow([lv.N, repr(lv.h), repr(lv.value), repr(lv.residual), repr(lv.lower_bound), int(lv.flagged), repr(d)])
    lines = [f"refinement ladder: field={kind} alpha={alpha}", CAVEAT, ""]
    for lv, d in zip(levels, diffs):
        flag = "  (unconverged)" if lv.flagged else ""
        lines.append(f"N={lv.N:4d}  value={lv.value:.8g}  residual={lv.residual:.2e}  diff={d:.3e}{flag}")
    ratios = [b / a for a, b in zip(diffs[:-2], diffs[1:-1]) if a > 0]
    if ratios:
        lines.append("ratios of successive differences: " + ", ".join(f"{r:.3f}" for r in ratios))
    path.with_suffix(".txt").write_text("\n".join(lines) + "\n")


# --- rotation --------------------------------------------------------------


@dataclass(frozen=True)
class RotationResult:
    angle: float
    rms: float
    band: int
    note: str = ""


def _interior(a, band):
    return a[..., band:-band, band:-band] if band > 0 else a


def rotation_diagnostic(img, alpha, banks, iters: int = 2000, *, quarter_turns=(1, 2, 3), include_45=True, band=None, h=1.0):
    """Compare ``denoise(rotate(f))`` with ``rotate(denoise(f))``.

    90 degree multiples are exact array rotations; 45 degrees uses bilinear
    resampling there and back, so its discrepancy includes interpolation
    error and is only indicative.  A border band of width ``nu + 1``
    (largest bank radius) is excluded.
    """
    f = np.asarray(getattr(img, "data", img), dtype=float)
    if f.shape[0] != f.shape[1]:
        raise ValueError("rotation diagnostic needs a square image")
    if band is None:
        band = max(b.nu for b in banks) + 1
    steps = precondition(banks, (*f.shape, h))
    denoise = lambda g: pd_solve(g, banks, alpha, iters, h=h, steps=steps).u
    base = denoise(f)
    out = []
    for k in quarter_turns:
        rotated = denoise(np.rot90(f, k))
        diff = _interior(rotated - np.rot90(base, k), band)
        out.append(RotationResult(90.0 * k, float(np.sqrt(np.mean(diff**2))), band))
    if include_45:
        rf = nd_rotate(f, 45, reshape=False, order=1, mode="nearest")
        back = nd_rotate(denoise(rf), -45, reshape=False, order=1, mode="nearest")
        # compare inside the inscribed disc, which stays inside the image in both frames
        n = f.shape[0]
        c = (n - 1) / 2
        I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        disc = (I - c) ** 2 + (J - c) ** 2 <= (n / 2 - band - 1) ** 2 / 2
        ref = nd_rotate(nd_rotate(base, 45, reshape=False, order=1, mode="nearest"), -45, reshape=False, order=1, mode="nearest")
        diff = (back - ref)[disc]
        out.append(RotationResult(45.0, float(np.sqrt(np.mean(diff**2))), band, "includes bilinear resampling error"))
    return out


def write_rotation_report(path, results, *, label="") -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["angle", "rms", "band", "note"])
        for r in results:
            w.writerow([r.angle, repr(r.rms), r.band, r.note])
    lines = [f"rotation diagnostic {label}".rstrip()]
    for r in results:
        lines.append(f"{r.angle:5.1f} deg  rms={r.rms:.3e}  (band {r.band}){'  ' + r.note if r.note else ''}")
    path.with_suffix(".txt").write_text("\n".join(lines) + "\n")
