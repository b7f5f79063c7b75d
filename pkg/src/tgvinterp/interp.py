"""Interpolation filter banks K and L.

A bank holds ``n`` filters, each with one ``(2 nu + 1) x (2 nu + 1)`` kernel
per channel of the field it interpolates.  Applying the bank to a field
``x`` of shape ``(..., C, M, N)`` gives coefficients of shape
``(..., n, C, M, N)`` with

    out[r, c, i, j] = sum_{m, n = -nu..nu} k[r, c, m, n] * x[c, i - m, j - n]

and zero padding outside the grid.  Tap ``(m, n)`` of channel ``c`` reads
the physical position ``(i, j) + offset_c - (m, n)``, where ``offset_c`` is
the native offset of the channel (``(1/2, 0)``, ``(0, 1/2)`` for L-banks and
``(0, 0)``, ``(1/2, 1/2)``, ``(0, 0)`` for K-banks).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .grid import CENTER, CORNER, TENSOR_OFFSETS, VECTOR_OFFSETS, X_EDGE, Y_EDGE, Offset

SUM_TO_ONE = "sum-to-one"
EQUAL_SUMS = "equal-sums"
UNCONSTRAINED = "none"
CONSTRAINTS = (SUM_TO_ONE, EQUAL_SUMS, UNCONSTRAINED)

CHANNELS = {"K": 3, "L": 2}
NATIVE_OFFSETS = {"K": TENSOR_OFFSETS, "L": VECTOR_OFFSETS}


@dataclass(frozen=True)
class FilterBank:
    """Kernels of shape ``(n, C, 2 nu + 1, 2 nu + 1)`` plus constraint metadata.

    ``target`` is ``"K"`` (acts on 3-channel tensor fields) or ``"L"`` (acts
    on 2-channel vector fields).  ``symmetric`` banks are closed under the
    90 degree rotation map :func:`rotate_filters` and are parameterised by
    the first ``n // 4`` filters (one per rotation orbit).
    """

    kernels: np.ndarray
    target: str
    constraint: str = SUM_TO_ONE
    gamma: float | None = None
    symmetric: bool = False

    def __post_init__(self):
        k = np.array(self.kernels, dtype=float)
        if self.target not in CHANNELS:
            raise ValueError(f"target must be 'K' or 'L', got {self.target!r}")
        if k.ndim != 4 or k.shape[2] != k.shape[3] or k.shape[2] % 2 != 1:
            raise ValueError(f"kernels must have shape (n, C, 2nu+1, 2nu+1), got {k.shape}")
        if k.shape[1] != CHANNELS[self.target]:
            raise ValueError(
                f"{self.target}-bank needs {CHANNELS[self.target]} channels, got {k.shape[1]}"
            )
        if k.shape[0] < 1:
            raise ValueError("bank needs at least one filter")
        if not np.all(np.isfinite(k)):
            raise ValueError("filter coefficients must be finite")
        if self.constraint not in CONSTRAINTS:
            raise ValueError(f"unknown constraint {self.constraint!r}")
        if self.symmetric:
            if self.target != "L":
                raise ValueError("the rotation symmetry is only defined for L-banks")
            if k.shape[0] % 4:
                raise ValueError("symmetric banks need a filter count divisible by 4")
        k.setflags(write=False)
        object.__setattr__(self, "kernels", k)

    @property
    def n(self) -> int:
        return self.kernels.shape[0]

    @property
    def channels(self) -> int:
        return self.kernels.shape[1]

    @property
    def nu(self) -> int:
        return self.kernels.shape[2] // 2

    @property
    def sums(self) -> np.ndarray:
        return self.kernels.sum(axis=(-2, -1))

    def with_kernels(self, kernels) -> "FilterBank":
        return replace(self, kernels=kernels)

    # --- serialisation -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "nu": self.nu,
            "n": self.n,
            "gamma": self.gamma,
            "constraint": self.constraint,
            "symmetric": self.symmetric,
            "kernels": [[k.ravel().tolist() for k in filt] for filt in self.kernels],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FilterBank":
        size = 2 * int(d["nu"]) + 1
        kernels = np.array(d["kernels"], dtype=float).reshape(int(d["n"]), -1, size, size)
        return cls(
            kernels,
            d["target"],
            constraint=d.get("constraint", SUM_TO_ONE),
            gamma=d.get("gamma"),
            symmetric=bool(d.get("symmetric", False)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "FilterBank":
        return cls.from_dict(json.loads(Path(path).read_text()))


# --- application ---------------------------------------------------------


def _pad(x, nu):
    if nu == 0:
        return x
    pad = [(0, 0)] * (x.ndim - 2) + [(nu, nu), (nu, nu)]
    return np.pad(x, pad)


def apply_bank(x, kernels) -> np.ndarray:
    """Apply kernels ``(n, C, s, s)`` to ``x`` of shape ``(..., C, M, N)``.

    ``out[..., l, c, i, j] = sum_{a, b} k[l, c, a, b] x[..., c, i + nu - a, j + nu - b]``
    with zero padding, i.e. a 2-D convolution centred at tap ``(nu, nu)``.
    """
    x = np.asarray(x, dtype=float)
    kernels = np.ascontiguousarray(kernels, dtype=float)
    if x.shape[-3] != kernels.shape[1]:
        raise ValueError(f"field has {x.shape[-3]} channels, bank expects {kernels.shape[1]}")
    lead = x.shape[:-3]
    xb = np.ascontiguousarray(x.reshape((-1,) + x.shape[-3:]))
    out = np.empty((xb.shape[0],) + kernels.shape[:2] + x.shape[-2:])
    _kernels.conv_bank(xb, kernels, out)
    return out.reshape(lead + out.shape[1:])


def apply_bank_adjoint(v, kernels) -> np.ndarray:
    """Transpose of :func:`apply_bank`: ``(..., n, C, M, N) -> (..., C, M, N)``."""
    v = np.asarray(v, dtype=float)
    kernels = np.ascontiguousarray(kernels, dtype=float)
    if v.shape[-4:-2] != kernels.shape[:2]:
        raise ValueError(f"coefficients {v.shape[-4:-2]} do not match bank {kernels.shape[:2]}")
    lead = v.shape[:-4]
    vb = np.ascontiguousarray(v.reshape((-1,) + v.shape[-4:]))
    out = np.empty((vb.shape[0],) + v.shape[-3:])
    _kernels.conv_bank_adjoint(vb, kernels, out)
    return out.reshape(lead + out.shape[1:])


def bank_correlation(x, v, s: int) -> np.ndarray:
    """Derivative of ``<apply_bank(x, k), v>`` w.r.t. every kernel entry.

    ``x`` has shape ``(..., C, M, N)``, ``v`` shape ``(..., n, C, M, N)``;
    leading axes are summed.  Returns an array of shape ``(n, C, s, s)``.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.shape[:-3] != v.shape[:-4] or x.shape[-3:] != v.shape[-3:]:
        raise ValueError(f"incompatible shapes {x.shape} and {v.shape}")
    xb = np.ascontiguousarray(x.reshape((-1,) + x.shape[-3:]))
    vb = np.ascontiguousarray(v.reshape((-1,) + v.shape[-4:]))
    return _kernels.correlate_bank(xb, vb, int(s))


def _apply_bank_reference(x, kernels) -> np.ndarray:
    # vectorised tap loop; reference for the compiled kernel
    x = np.asarray(x, dtype=float)
    kernels = np.asarray(kernels)
    s = kernels.shape[-1]
    nu = s // 2
    M, N = x.shape[-2:]
    if x.shape[-3] != kernels.shape[1]:
        raise ValueError(f"field has {x.shape[-3]} channels, bank expects {kernels.shape[1]}")
    if nu == 0:
        return kernels[:, :, 0, 0, None, None] * x[..., None, :, :, :]
    xp = _pad(x, nu)[..., None, :, :, :]
    out = np.zeros(x.shape[:-3] + kernels.shape[:2] + (M, N))
    # out[i] = sum_a k[a] * xp[i + 2 nu - a]
    for a in range(s):
        for b in range(s):
            k = kernels[:, :, a, b, None, None]
            if not k.any():
                continue
            out += k * xp[..., 2 * nu - a : 2 * nu - a + M, 2 * nu - b : 2 * nu - b + N]
    return out


def _apply_bank_adjoint_reference(v, kernels) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    kernels = np.asarray(kernels)
    s = kernels.shape[-1]
    nu = s // 2
    M, N = v.shape[-2:]
    if v.shape[-4:-2] != kernels.shape[:2]:
        raise ValueError(f"coefficients {v.shape[-4:-2]} do not match bank {kernels.shape[:2]}")
    if nu == 0:
        return (kernels[:, :, 0, 0, None, None] * v).sum(axis=-4)
    vp = _pad(v, nu)
    out = np.zeros(v.shape[:-4] + v.shape[-3:])
    for a in range(s):
        for b in range(s):
            k = kernels[:, :, a, b, None, None]
            if not k.any():
                continue
            out += (k * vp[..., a : a + M, b : b + N]).sum(axis=-4)
    return out


def _bank_correlation_reference(x, v, s: int) -> np.ndarray:
    """Derivative of ``<apply_bank(x, k), v>`` w.r.t. every kernel entry.

    ``x`` has shape ``(..., C, M, N)``, ``v`` shape ``(..., n, C, M, N)``;
    leading axes are summed.  Returns an array of shape ``(n, C, s, s)``.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    nu = s // 2
    M, N = x.shape[-2:]
    xp = _pad(x, nu)[..., None, :, :, :]
    batch = tuple(range(v.ndim - 4))
    out = np.zeros(v.shape[-4:-2] + (s, s))
    for a in range(s):
        for b in range(s):
            prod = xp[..., 2 * nu - a : 2 * nu - a + M, 2 * nu - b : 2 * nu - b + N] * v
            out[:, :, a, b] = prod.sum(axis=batch + (-2, -1))
    return out


def apply_K(p, bank: FilterBank) -> np.ndarray:
    if bank.target != "K":
        raise ValueError("apply_K needs a K-bank")
    return apply_bank(p, bank.kernels)


def apply_K_adjoint(v, bank: FilterBank) -> np.ndarray:
    if bank.target != "K":
        raise ValueError("apply_K_adjoint needs a K-bank")
    return apply_bank_adjoint(v, bank.kernels)


def apply_L(w, bank: FilterBank) -> np.ndarray:
    if bank.target != "L":
        raise ValueError("apply_L needs an L-bank")
    return apply_bank(w, bank.kernels)


def apply_L_adjoint(v, bank: FilterBank) -> np.ndarray:
    if bank.target != "L":
        raise ValueError("apply_L_adjoint needs an L-bank")
    return apply_bank_adjoint(v, bank.kernels)


# --- constructions -------------------------------------------------------


def _axis_taps(native: float, target: float) -> list[tuple[int, float]]:
    # taps m with source position native - m, linearly interpolated at target
    if native == target:
        return [(0, 1.0)]
    m0 = native - target
    return [(int(round(m0 - 0.5)), 0.5), (int(round(m0 + 0.5)), 0.5)]


def interpolation_kernel(native: Offset, target: Offset, nu: int = 1) -> np.ndarray:
    """Bilinear kernel moving samples from ``native`` to ``target`` offsets."""
    k = np.zeros((2 * nu + 1, 2 * nu + 1))
    for m, wm in _axis_taps(native.dx, target.dx):
        for n, wn in _axis_taps(native.dy, target.dy):
            k[m + nu, n + nu] += wm * wn
    return k


HANDCRAFTED_TARGETS = {
    "L3": ("L", (CENTER, X_EDGE, Y_EDGE)),
    "L4": ("L", (CENTER, X_EDGE, Y_EDGE, CORNER)),
    "K1": ("K", (CENTER,)),
    "K4": ("K", (CENTER, X_EDGE, Y_EDGE, CORNER)),
}


def bank_for_targets(target: str, targets, nu: int = 1) -> FilterBank:
    """Bank interpolating every channel to each of ``targets`` (one filter each)."""
    natives = NATIVE_OFFSETS[target]
    kernels = np.array(
        [[interpolation_kernel(src, dst, nu) for src in natives] for dst in targets]
    )
    return FilterBank(kernels, target)


def handcrafted_bank(kind: str, nu: int = 1) -> FilterBank:
    """Bilinear banks ``L3``, ``L4``, ``K1`` and ``K4``."""
    try:
        target, targets = HANDCRAFTED_TARGETS[kind]
    except KeyError:
        raise ValueError(f"unknown handcrafted bank {kind!r}") from None
    return bank_for_targets(target, targets, nu)


def identity_bank(target: str, nu: int = 0) -> FilterBank:
    """Single delta filter; with both banks set this way the model is plain TGV."""
    kernels = np.zeros((1, CHANNELS[target], 2 * nu + 1, 2 * nu + 1))
    kernels[:, :, nu, nu] = 1.0
    return FilterBank(kernels, target)


def random_bank(target: str, n: int, nu: int, rng, constraint: str = SUM_TO_ONE) -> FilterBank:
    """Uniform ``U(-1/sqrt(b), 1/sqrt(b))`` kernels, ``b = C (2 nu + 1)^2``,
    projected onto the constraint set."""
    C = CHANNELS[target]
    s = 2 * nu + 1
    bound = 1.0 / np.sqrt(C * s * s)
    k = rng.uniform(-bound, bound, size=(n, C, s, s))
    return project_constraints(FilterBank(k, target, constraint=constraint))


# --- constraints ---------------------------------------------------------


def support_mask(bank: FilterBank) -> np.ndarray:
    """Boolean mask of the kernel entries that are free parameters.

    Symmetric L-banks drop the first row of the ``w1`` kernels and the first
    column of the ``w2`` kernels so that each channel's support is centred
    on the pixel; the rotation map is then a permutation of the support.
    """
    mask = np.ones(bank.kernels.shape, dtype=bool)
    if bank.symmetric:
        mask[:, 0, 0, :] = False
        mask[:, 1, :, 0] = False
    return mask


def project_kernels(kernels, mask, constraint: str):
    """Project kernels onto a sum constraint on the free taps given by ``mask``.

    Returns ``(kernels, gamma)``; ``gamma`` is the common sum for the
    equal-sums constraint and ``None`` otherwise.
    """
    if constraint == UNCONSTRAINED:
        return np.asarray(kernels, dtype=float), None
    k = np.where(mask, kernels, 0.0)
    count = mask.sum(axis=(-2, -1))
    sums = k.sum(axis=(-2, -1))
    if constraint == SUM_TO_ONE:
        goal, gamma = 1.0, None
    else:
        goal = float(sums.mean())
        gamma = goal
    k = k - np.where(mask, ((sums - goal) / count)[..., None, None], 0.0)
    return k, gamma


def project_constraints(bank: FilterBank) -> FilterBank:
    """Euclidean projection of every kernel onto its sum constraint."""
    if bank.constraint == UNCONSTRAINED:
        return bank
    k, gamma = project_kernels(bank.kernels, support_mask(bank), bank.constraint)
    if bank.constraint == SUM_TO_ONE:
        gamma = bank.gamma
    return replace(bank, kernels=k, gamma=gamma)


def constraint_violation(bank: FilterBank) -> float:
    """Largest deviation of a kernel sum from its required value."""
    sums = bank.sums
    if bank.constraint == SUM_TO_ONE:
        return float(np.abs(sums - 1.0).max())
    if bank.constraint == EQUAL_SUMS:
        goal = bank.gamma if bank.gamma is not None else sums.mean()
        return float(np.abs(sums - goal).max())
    return 0.0


def normalize_bank(bank: FilterBank) -> tuple[FilterBank, float]:
    """Rescale an equal-sums bank to unit sums; returns ``(bank, gamma)``.

    Because ``K* v = (K/gamma)* (gamma v)``, solving with the normalised bank
    and regularisation weight ``alpha / |gamma|`` gives the same image.
    """
    gamma = float(bank.gamma if bank.gamma is not None else bank.sums.mean())
    if gamma == 0.0:
        raise ValueError("cannot normalise a bank whose kernels sum to zero")
    return replace(bank, kernels=bank.kernels / gamma, constraint=SUM_TO_ONE, gamma=None), gamma


# --- rotation symmetry -----------------------------------------------------


def _shift_rows(k, shift):
    out = np.zeros_like(k)
    if shift > 0:
        out[..., shift:, :] = k[..., :-shift, :]
    elif shift < 0:
        out[..., :shift, :] = k[..., -shift:, :]
    else:
        out[...] = k
    return out


def _shift_cols(k, shift):
    return np.swapaxes(_shift_rows(np.swapaxes(k, -1, -2), shift), -1, -2)


def rotate_filters(kernels) -> np.ndarray:
    """Rotate L-filters by 90 degrees about the pixel centre.

    The rotated filter reads ``w2`` where the original read ``w1`` and vice
    versa, at the rotated tap positions.  Because ``w1`` and ``w2`` live on
    differently staggered grids, the new ``w1`` kernel is ``rot90`` of the
    old ``w2`` kernel shifted by one row.
    """
    k = np.asarray(kernels, dtype=float)
    out = np.empty_like(k)
    out[..., 1, :, :] = np.rot90(k[..., 0, :, :], 1, axes=(-2, -1))
    out[..., 0, :, :] = _shift_rows(np.rot90(k[..., 1, :, :], 1, axes=(-2, -1)), 1)
    return out


def unrotate_filters(kernels) -> np.ndarray:
    """Inverse of :func:`rotate_filters` on masked (symmetric) supports."""
    k = np.asarray(kernels, dtype=float)
    out = np.empty_like(k)
    out[..., 0, :, :] = np.rot90(k[..., 1, :, :], -1, axes=(-2, -1))
    out[..., 1, :, :] = np.rot90(_shift_rows(k[..., 0, :, :], -1), -1, axes=(-2, -1))
    return out


def orbit(representatives) -> np.ndarray:
    """Stack each representative with its three rotations: ``(4 n, 2, s, s)``.

    Filters are ordered rotation-major: rotation ``q`` of representative
    ``r`` sits at index ``q * n + r``.
    """
    reps = np.asarray(representatives, dtype=float)
    rots = [reps]
    for _ in range(3):
        rots.append(rotate_filters(rots[-1]))
    return np.concatenate(rots, axis=0)


def symmetrize_bank(bank: FilterBank) -> FilterBank:
    """Make an L-bank closed under 90 degree rotation.

    The first ``n // 4`` filters are kept as orbit representatives (masked
    to the centred support) and the remaining filters are regenerated as
    their rotations.
    """
    if bank.target != "L":
        raise ValueError("only L-banks can be symmetrised")
    if bank.n % 4:
        raise ValueError(f"symmetric mode needs n_L divisible by 4, got {bank.n}")
    sym = replace(bank, symmetric=True)
    reps = np.where(support_mask(sym), bank.kernels, 0.0)[: bank.n // 4]
    return replace(sym, kernels=orbit(reps))


def representatives(bank: FilterBank) -> np.ndarray:
    return bank.kernels[: bank.n // 4] if bank.symmetric else bank.kernels


def pull_back_gradient(bank: FilterBank, grad) -> np.ndarray:
    """Chain rule through :func:`orbit`: gradient w.r.t. the representatives."""
    g = np.where(support_mask(bank), grad, 0.0)
    if not bank.symmetric:
        return g
    q = bank.n // 4
    out = np.zeros_like(g[:q])
    back = g[:q].copy()
    out += back
    for rot in range(1, 4):
        block = g[rot * q : (rot + 1) * q]
        for _ in range(rot):
            block = unrotate_filters(block)
        out += block
    return out
