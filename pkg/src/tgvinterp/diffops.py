"""Forward-difference operators D, E, D^2 and their negated adjoints.

Storage positions (see :mod:`tgvinterp.grid`):

* ``grad(u)[0]`` at ``(i+1/2, j)``, ``grad(u)[1]`` at ``(i, j+1/2)``;
  the last row (resp. column) is zero.
* ``sym_grad(w)[0]`` and ``[2]`` are the second differences centred at the
  pixel ``(i, j)``; ``sym_grad(w)[1]`` is the mixed term at the corner
  ``(i+1/2, j+1/2)``.

A difference is set to zero whenever one of its operands is a padded entry
of the input, i.e. it would reach past the last valid row or column.  For
``w`` that means the padded last row of ``w[0]`` and last column of ``w[1]``
never enter ``sym_grad``, so ``second_order`` annihilates affine images on
the whole grid.

All functions accept arbitrary leading batch axes.
"""

from __future__ import annotations

import numpy as np

from .grid import TENSOR_WEIGHTS


def grad(u, h: float = 1.0) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape[:-2] + (2,) + u.shape[-2:])
    out[..., 0, :-1, :] = (u[..., 1:, :] - u[..., :-1, :]) / h
    out[..., 1, :, :-1] = (u[..., :, 1:] - u[..., :, :-1]) / h
    return out


def div_vector(q, h: float = 1.0) -> np.ndarray:
    """Negated adjoint of :func:`grad`: ``<grad u, q> = -<u, div_vector q>``."""
    q = np.asarray(q, dtype=float)
    q1 = q[..., 0, :-1, :]
    q2 = q[..., 1, :, :-1]
    out = np.zeros(q.shape[:-3] + q.shape[-2:])
    out[..., :-1, :] += q1
    out[..., 1:, :] -= q1
    out[..., :, :-1] += q2
    out[..., :, 1:] -= q2
    out /= h
    return out


def sym_grad(w, h: float = 1.0) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    w1 = w[..., 0, :, :]
    w2 = w[..., 1, :, :]
    out = np.zeros(w.shape[:-3] + (3,) + w.shape[-2:])
    out[..., 0, 1:-1, :] = (w1[..., 1:-1, :] - w1[..., :-2, :]) / h
    out[..., 2, :, 1:-1] = (w2[..., :, 1:-1] - w2[..., :, :-2]) / h
    out[..., 1, :-1, :-1] = (
        w1[..., :-1, 1:] - w1[..., :-1, :-1] + w2[..., 1:, :-1] - w2[..., :-1, :-1]
    ) / (2.0 * h)
    return out


def _sym_grad_transpose(q, h: float) -> np.ndarray:
    # plain matrix transpose of sym_grad (no channel weights)
    q = np.asarray(q, dtype=float)
    out = np.zeros(q.shape[:-3] + (2,) + q.shape[-2:])
    q1 = q[..., 0, 1:-1, :]
    out[..., 0, 1:-1, :] += q1
    out[..., 0, :-2, :] -= q1
    q3 = q[..., 2, :, 1:-1]
    out[..., 1, :, 1:-1] += q3
    out[..., 1, :, :-2] -= q3
    q2 = 0.5 * q[..., 1, :-1, :-1]
    out[..., 0, :-1, 1:] += q2
    out[..., 0, :-1, :-1] -= q2
    out[..., 1, 1:, :-1] += q2
    out[..., 1, :-1, :-1] -= q2
    out /= h
    return out


def div_tensor(p, h: float = 1.0) -> np.ndarray:
    """Negated adjoint of :func:`sym_grad` under the Frobenius tensor product."""
    p = np.asarray(p, dtype=float)
    return -_sym_grad_transpose(p * TENSOR_WEIGHTS[:, None, None], h)


def second_order(u, h: float = 1.0) -> np.ndarray:
    """Symmetrised second-order differences ``E D u``."""
    return sym_grad(grad(u, h), h)


def div2(p, h: float = 1.0) -> np.ndarray:
    """Adjoint of :func:`second_order`: ``<D^2 u, p>_F = <u, div2 p>``."""
    return div_vector(div_tensor(p, h), h)


def power_iteration(apply, adjoint, shape, *, tol=1e-6, max_iter=500, rng=None, x0=None):
    """Estimate ``||A||`` for a linear map by power iteration on ``A^* A``.

    Returns ``(norm, converged, x)`` where ``x`` is the final unit iterate,
    usable as a warm start for a nearby operator.
    """
    if x0 is None:
        rng = np.random.default_rng(0) if rng is None else rng
        x = rng.standard_normal(shape)
    else:
        x = np.array(x0, dtype=float, copy=True)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iter):
        y = adjoint(apply(x))
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0, True, x
        x = y / nrm
        new = np.sqrt(nrm)
        if abs(new - est) <= tol * new:
            return float(new), True, x
        est = new
    return float(est), False, x
