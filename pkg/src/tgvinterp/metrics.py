"""Image quality metrics and CSV reports."""

from __future__ import annotations

import csv
import math

import numpy as np
from scipy.ndimage import gaussian_filter


def _pair(u, ref):
    u = np.asarray(getattr(u, "data", u), dtype=float)
    ref = np.asarray(getattr(ref, "data", ref), dtype=float)
    if u.shape != ref.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {ref.shape}")
    return u, ref


def mse(u, ref) -> float:
    u, ref = _pair(u, ref)
    return float(np.mean((u - ref) ** 2))


def psnr(u, ref, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    err = mse(u, ref)
    if err == 0.0:
        return math.inf
    return float(10.0 * np.log10(peak * peak / err))


def ssim(u, ref, peak: float = 1.0, sigma: float = 1.5) -> float:
    """Mean structural similarity with an 11 x 11 Gaussian window.

    Local statistics use population (not sample) covariances; the mean is
    taken over pixels at least 5 away from the border.
    """
    u, ref = _pair(u, ref)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    filt = lambda a: gaussian_filter(a, sigma, truncate=3.5)
    mu_x, mu_y = filt(u), filt(ref)
    sxx = filt(u * u) - mu_x * mu_x
    syy = filt(ref * ref) - mu_y * mu_y
    sxy = filt(u * ref) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
    smap = num / den
    r = int(3.5 * sigma + 0.5)
    if min(smap.shape) > 2 * r:
        smap = smap[r:-r, r:-r]
    return float(smap.mean())


def evaluate(u, ref, peak: float = 1.0) -> dict:
    return {"psnr": psnr(u, ref, peak), "mse": mse(u, ref), "ssim": ssim(u, ref, peak)}


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


def write_report(path, rows) -> None:
    """Per-image CSV with columns ``image_id, psnr, mse, ssim``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "psnr", "mse", "ssim"])
        for image_id, m in rows:
            w.writerow([image_id, _fmt(m["psnr"]), _fmt(m["mse"]), _fmt(m["ssim"])])


def summarize(rows) -> dict:
    """Per-image averages: mean PSNR, mean MSE and mean SSIM."""
    ms = [m for _, m in rows]
    return {k: float(np.mean([m[k] for m in ms])) for k in ("psnr", "mse", "ssim")}


def write_table(path, table) -> None:
    """Method-by-metric summary CSV; ``table`` maps method name to :func:`summarize` output."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "psnr", "mse", "ssim"])
        for method, m in table.items():
            w.writerow([method, _fmt(m["psnr"]), _fmt(m["mse"]), _fmt(m["ssim"])])
