"""Proximal maps of the group norm and the quadratic data term, with Jacobians.

Group norms act on the channel axis (-3).  ``weights`` selects a weighted
channel norm ``sqrt(sum_c w_c x_c^2)``; the prox is then taken in the
matching weighted metric, which keeps the closed form of plain group
shrinkage.
"""

from __future__ import annotations

import numpy as np

from .grid import group_norms


def _shrink_factor(x, t, weights):
    norms = group_norms(x, weights)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(norms > t, 1.0 - t / norms, 0.0)
    return norms, factor


def prox_group_z(x, t: float, weights=None) -> np.ndarray:
    """Group soft-shrinkage ``(1 - t / ||g||)_+ g`` for every channel group."""
    if t < 0:
        raise ValueError("prox parameter must be non-negative")
    x = np.asarray(x, dtype=float)
    if t == 0:
        return x.copy()
    _, factor = _shrink_factor(x, t, weights)
    return x * factor[..., None, :, :]


def prox_group_z_jvp(x, t: float, direction, weights=None) -> np.ndarray:
    """Apply the Jacobian of :func:`prox_group_z` at ``x`` to ``direction``.

    Groups with ``||g|| <= t`` use the zero branch.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(direction, dtype=float)
    if t == 0:
        return d.copy()
    norms, factor = _shrink_factor(x, t, weights)
    xd = x * d
    if weights is not None:
        xd = xd * np.asarray(weights, dtype=float)[:, None, None]
    live = norms > t
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(live, t * xd.sum(axis=-3) / norms**3, 0.0)
    return factor[..., None, :, :] * d + coef[..., None, :, :] * x


def project_dual_ball(x, radius: float = 1.0, weights=None) -> np.ndarray:
    """Project every channel group onto the ball of the given radius."""
    x = np.asarray(x, dtype=float)
    norms = group_norms(x, weights)
    scale = radius / np.maximum(norms, radius)
    return x * scale[..., None, :, :]


def prox_quadratic(x, f, t: float) -> np.ndarray:
    """Prox of ``t * 1/2 ||. - f||^2``."""
    return (np.asarray(x) + t * np.asarray(f)) / (1.0 + t)


def prox_quadratic_jvp(direction, t: float) -> np.ndarray:
    return np.asarray(direction) / (1.0 + t)
