"""Synthetic piecewise-affine images, noise, resampling and image files."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .diffops import second_order
from .grid import Image

SHAPES = ("triangle", "rectangle", "circle")
# shape extent in pixels at the reference size of 128
SIZE_RANGE = (8.0, 60.0)
# largest intensity slope per unit length of the domain
MAX_SLOPE = 2.0
MAX_KINK_FRACTION = 0.15


def _affine_fill(rng, center, extent, n):
    """Random affine intensity ``a + g.(x - center)`` staying in [0, 1] over the box."""
    a = rng.uniform(0.15, 0.85)
    g = rng.uniform(-MAX_SLOPE, MAX_SLOPE, size=2) / n
    reach = np.abs(g).sum() * extent
    room = min(a, 1.0 - a)
    if reach > room:
        g *= room / reach
    return a, g


def _shape_mask(rng, kind, X, Y, n):
    scale = n / 128.0
    size = rng.uniform(*SIZE_RANGE) * scale
    cx, cy = rng.uniform(0, n, size=2)
    if kind == "rectangle":
        w, h = size, rng.uniform(0.4, 1.0) * size
        mask = (np.abs(X - cx) <= w / 2) & (np.abs(Y - cy) <= h / 2)
    elif kind == "circle":
        mask = (X - cx) ** 2 + (Y - cy) ** 2 <= (size / 2) ** 2
    else:
        ang = rng.uniform(0, 2 * np.pi) + np.array([0.0, 2.1, 4.2]) + rng.uniform(-0.4, 0.4, 3)
        px = cx + 0.5 * size * np.cos(ang)
        py = cy + 0.5 * size * np.sin(ang)
        mask = np.ones_like(X, dtype=bool)
        sign = np.sign((px[1] - px[0]) * (py[2] - py[0]) - (py[1] - py[0]) * (px[2] - px[0]))
        for k in range(3):
            x0, y0, x1, y1 = px[k], py[k], px[(k + 1) % 3], py[(k + 1) % 3]
            mask &= sign * ((x1 - x0) * (Y - y0) - (y1 - y0) * (X - x0)) >= 0
    return mask, (cx, cy), size


def _draw(rng, size):
    M, N = size
    n = max(M, N)
    X, Y = np.meshgrid(np.arange(M) + 0.5, np.arange(N) + 0.5, indexing="ij")
    a, g = _affine_fill(rng, (M / 2, N / 2), n / 2, n)
    img = a + g[0] * (X - M / 2) + g[1] * (Y - N / 2)
    for _ in range(rng.integers(2, 7)):
        kind = SHAPES[rng.integers(len(SHAPES))]
        mask, c, extent = _shape_mask(rng, kind, X, Y, n)
        a, g = _affine_fill(rng, c, extent, n)
        img = np.where(mask, a + g[0] * (X - c[0]) + g[1] * (Y - c[1]), img)
    return np.clip(img, 0.0, 1.0)


def kink_fraction(img, tol: float = 1e-8) -> float:
    """Fraction of pixels where the second-order differences exceed ``tol``."""
    d2 = np.abs(second_order(img)).max(axis=-3)
    return float((d2 > tol).mean())


def gen_synthetic(seed: int, count: int = 32, size=(128, 128)) -> list[Image]:
    """Piecewise-affine test images: an affine background plus 2-6 shapes.

    Each shape (triangle, rectangle or circle) carries its own affine
    intensity.  Draws whose shape boundaries cover more than 15% of the
    pixels (in the second-order difference sense) are rejected and redrawn.
    """
    size = (int(size[0]), int(size[1])) if np.ndim(size) else (int(size), int(size))
    if min(size) < 16:
        raise ValueError("synthetic images need at least 16 x 16 pixels")
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        img = _draw(rng, size)
        if kink_fraction(img) <= MAX_KINK_FRACTION:
            out.append(Image(img))
    return out


def add_gaussian_noise(img, sigma: float, seed: int):
    """Add N(0, (sigma/255)^2) noise; ``sigma`` is given on the 0-255 scale."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    data, h = _unwrap(img)
    noisy = data + np.random.default_rng(seed).normal(0.0, sigma / 255.0, size=data.shape)
    return _wrap(img, noisy, h)


def _unwrap(img):
    if isinstance(img, Image):
        return img.data, img.h
    return np.asarray(img, dtype=float), None


def _wrap(like, data, h):
    return Image(data, h) if isinstance(like, Image) else data


def upsample8(img, factor: int = 8):
    """Replicate every pixel into a ``factor x factor`` block; ``h`` shrinks accordingly."""
    data, h = _unwrap(img)
    up = np.repeat(np.repeat(data, factor, axis=-2), factor, axis=-1)
    return _wrap(img, up, None if h is None else h / factor)


def downsample8(img, factor: int = 8):
    """Average ``factor x factor`` blocks; ``h`` grows accordingly."""
    data, h = _unwrap(img)
    M, N = data.shape[-2:]
    if M % factor or N % factor:
        raise ValueError(f"grid {M}x{N} is not divisible by {factor}")
    blocks = data.reshape(data.shape[:-2] + (M // factor, factor, N // factor, factor))
    down = blocks.mean(axis=(-3, -1))
    return _wrap(img, down, None if h is None else h * factor)


def pseudo_ground_truth(img, alpha, banks=None, iters: int = 20000, *, h: float = 1.0, factor: int = 8, warm=None):
    """Solve the denoising problem on the ``factor``-times finer grid and average back.

    The coarse pixel size is ``h``; the fine solve uses ``h / factor`` so the
    regularisation weights keep their continuous meaning.  ``warm`` is an
    optional coarse-grid image used (after replication) as the initial ``u``.
    Accepts a single image or a stack ``(S, M, N)``.
    """
    from .interp import handcrafted_bank
    from .solver import Discretization, SaddleState, pd_solve

    if banks is None:
        banks = (handcrafted_bank("K1"), handcrafted_bank("L3"))
    data, h_img = _unwrap(img)
    if h_img is not None:
        h = h_img
    fine = upsample8(data, factor)
    init = None
    if warm is not None:
        vK, vL, p = Discretization(banks, h / factor).zeros(fine.shape)
        init = SaddleState(upsample8(np.asarray(warm, dtype=float), factor), vK, vL, p)
    state = pd_solve(fine, banks, alpha, iters, h=h / factor, init=init)
    return _wrap(img, downsample8(state.u, factor), h)


# --- files -----------------------------------------------------------------


def load_image(path, *, luma: bool = False) -> Image:
    """Read an 8- or 16-bit grayscale PNG into [0, 1].

    Colour images are rejected unless ``luma`` is set, in which case they
    are converted with the ITU-R 601 weights.
    """
    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("L", "LA"):
                arr = np.asarray(im.getchannel("L"), dtype=float) / 255.0
            elif mode.startswith("I;16") or mode == "I":
                arr = np.asarray(im).astype(float) / 65535.0
            elif mode in ("RGB", "RGBA", "P", "CMYK", "YCbCr"):
                if not luma:
                    raise ValueError(f"{path}: colour image ({mode}); pass luma=True to convert")
                rgb = np.asarray(im.convert("RGB"), dtype=float) / 255.0
                arr = rgb @ np.array([0.299, 0.587, 0.114])
            else:
                raise ValueError(f"{path}: unsupported image mode {mode}")
    except OSError as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    return Image(arr)


def save_image(img, path, *, bits: int = 16) -> None:
    """Write an image clipped to [0, 1] as an 8- or 16-bit grayscale PNG."""
    data, _ = _unwrap(img)
    data = np.clip(data, 0.0, 1.0)
    if bits == 8:
        PILImage.fromarray(np.round(data * 255).astype(np.uint8)).save(path)
    elif bits == 16:
        arr = np.round(data * 65535).astype(np.uint16)
        PILImage.fromarray(arr).save(path)
    else:
        raise ValueError("bits must be 8 or 16")


def center_crop(img, size: int = 128):
    data, h = _unwrap(img)
    M, N = data.shape[-2:]
    if M < size or N < size:
        raise ValueError(f"image {M}x{N} is smaller than the crop {size}")
    i0, j0 = (M - size) // 2, (N - size) // 2
    return _wrap(img, data[..., i0 : i0 + size, j0 : j0 + size], h)


def write_manifest(path, entries) -> None:
    """``entries``: iterable of ``(clean, corrupted, sigma, seed)``."""
    rows = [
        {"clean": str(c), "corrupted": str(n), "sigma": float(s), "seed": int(sd)}
        for c, n, s, sd in entries
    ]
    Path(path).write_text(json.dumps(rows, indent=1))


def read_manifest(path) -> list[tuple[str, str, float, int]]:
    rows = json.loads(Path(path).read_text())
    return [(r["clean"], r["corrupted"], float(r["sigma"]), int(r["seed"])) for r in rows]
