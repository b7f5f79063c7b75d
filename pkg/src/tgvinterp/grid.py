"""Grid-aligned data types, staggered offsets and the group norms.

Arrays follow one layout convention throughout the package: the last two
axes are the pixel grid ``(M, N)`` (axis ``-2`` is the first coordinate
``i``, axis ``-1`` the second coordinate ``j``), the axis before that holds
the field channels, and for coefficient fields the axis before the channels
indexes the filters.  Any further leading axes are batch axes.

Symmetric 2x2 tensor fields are stored with three channels
``(p11, p12, p22)``; the off-diagonal channel is counted twice in inner
products and norms so that they agree with the Frobenius product.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# channel weights of the 3-channel symmetric tensor storage
TENSOR_WEIGHTS = np.array([1.0, 2.0, 1.0])


@dataclass(frozen=True)
class Offset:
    """Sub-pixel position of a field channel, in fractions of a pixel."""

    dx: float
    dy: float

    def __post_init__(self):
        if self.dx not in (0.0, 0.5) or self.dy not in (0.0, 0.5):
            raise ValueError(f"offset components must be 0 or 1/2, got ({self.dx}, {self.dy})")

    def __iter__(self):
        return iter((self.dx, self.dy))


CENTER = Offset(0.0, 0.0)
X_EDGE = Offset(0.5, 0.0)
Y_EDGE = Offset(0.0, 0.5)
CORNER = Offset(0.5, 0.5)

VECTOR_OFFSETS = (X_EDGE, Y_EDGE)
TENSOR_OFFSETS = (CENTER, CORNER, CENTER)


@dataclass(frozen=True)
class Image:
    """Scalar M x N image with pixel size ``h``."""

    data: np.ndarray
    h: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2 or min(data.shape) < 2:
            raise ValueError(f"image must be 2-D with M, N >= 2, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("image contains non-finite values")
        if not self.h > 0:
            raise ValueError("pixel size must be positive")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class StaggeredField:
    """C channel arrays on a common M x N grid, each tagged with an offset."""

    channels: np.ndarray
    offsets: tuple[Offset, ...]
    h: float = 1.0

    def __post_init__(self):
        channels = np.asarray(self.channels, dtype=float)
        if channels.ndim != 3:
            raise ValueError("channels must have shape (C, M, N)")
        if len(self.offsets) != channels.shape[0]:
            raise ValueError("one offset per channel required")
        if not np.all(np.isfinite(channels)):
            raise ValueError("field contains non-finite values")
        channels.setflags(write=False)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "offsets", tuple(self.offsets))

    @classmethod
    def vector(cls, channels, h=1.0) -> "StaggeredField":
        return cls(channels, VECTOR_OFFSETS, h)

    @classmethod
    def tensor(cls, channels, h=1.0) -> "StaggeredField":
        return cls(channels, TENSOR_OFFSETS, h)

    @property
    def weights(self) -> np.ndarray:
        if self.offsets == TENSOR_OFFSETS:
            return TENSOR_WEIGHTS
        return np.ones(len(self.offsets))


@dataclass(frozen=True)
class CoefficientField:
    """Interpolated coefficients, shape ``(n, C, M, N)``."""

    groups: np.ndarray
    weights: np.ndarray | None = field(default=None)

    def __post_init__(self):
        groups = np.asarray(self.groups, dtype=float)
        if groups.ndim != 4 or groups.shape[0] < 1:
            raise ValueError("groups must have shape (n, C, M, N) with n >= 1")
        if not np.all(np.isfinite(groups)):
            raise ValueError("coefficients contain non-finite values")
        groups.setflags(write=False)
        object.__setattr__(self, "groups", groups)

    def znorm(self) -> float:
        return znorm(self.groups, self.weights)

    def znorm_dual(self) -> float:
        return znorm_dual(self.groups, self.weights)


def _weights(weights, n_channels: int) -> np.ndarray | None:
    if weights is None:
        return None
    w = np.asarray(weights, dtype=float)
    if w.shape != (n_channels,):
        raise ValueError(f"expected {n_channels} channel weights, got shape {w.shape}")
    return w


def group_norms(x, weights: Sequence[float] | None = None) -> np.ndarray:
    """Channel 2-norm at every (batch, filter, pixel); channel axis is -3."""
    x = np.asarray(x)
    w = _weights(weights, x.shape[-3])
    sq = x * x
    if w is not None:
        sq = sq * w[:, None, None]
    return np.sqrt(sq.sum(axis=-3))


def znorm(x, weights: Sequence[float] | None = None) -> float:
    """The mixed ``l^{1,1,2}`` norm: group 2-norms over channels, summed."""
    return float(group_norms(x, weights).sum())


def znorm_dual(x, weights: Sequence[float] | None = None) -> float:
    """Dual of :func:`znorm`: largest channel-group 2-norm."""
    g = group_norms(x, weights)
    return float(g.max()) if g.size else 0.0


def inner(a, b, weights: Sequence[float] | None = None) -> float:
    """Euclidean inner product, optionally weighting the channel axis (-3)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if weights is None:
        return float(np.vdot(a, b))
    w = _weights(weights, a.shape[-3])
    return float(np.sum(a * b * w[:, None, None]))


def tensor_inner(p, q) -> float:
    """Frobenius inner product of two 3-channel symmetric tensor fields."""
    return inner(p, q, TENSOR_WEIGHTS)


def as_array(x) -> np.ndarray:
    """Unwrap grid value objects to their underlying array."""
    if isinstance(x, Image):
        return x.data
    if isinstance(x, StaggeredField):
        return x.channels
    if isinstance(x, CoefficientField):
        return x.groups
    return np.asarray(x, dtype=float)
