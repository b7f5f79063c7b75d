"""Joint primal-dual iteration on the saddle point and its adjoint state.

The adjoint recursion is the derivative of the primal-dual map along the
direction obtained by adding ``eps * grad loss`` to the ``u`` gradient step.
At a converged pair this derivative is the sensitivity of the saddle point
to a perturbation of the data term by ``eps * loss``; pairing it with the
operator derivative gives the gradient of the loss with respect to the
filter coefficients without storing the trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffops
from .grid import TENSOR_WEIGHTS
from .interp import apply_bank, bank_correlation
from .prox import prox_group_z, prox_group_z_jvp, prox_quadratic, prox_quadratic_jvp
from .solver import (
    K_WEIGHTS,
    Discretization,
    SaddleState,
    StepSizes,
    SolverDivergence,
    initial_state,
    precondition,
)

_W = TENSOR_WEIGHTS[:, None, None]


@dataclass(frozen=True)
class AdjointState:
    U: np.ndarray
    V_K: np.ndarray
    V_L: np.ndarray
    P: np.ndarray
    P_bar: np.ndarray | None = None

    @classmethod
    def zeros_like(cls, state: SaddleState) -> "AdjointState":
        return cls(
            np.zeros_like(state.u), np.zeros_like(state.v_K),
            np.zeros_like(state.v_L), np.zeros_like(state.p),
        )


def quadratic_loss(u, target) -> float:
    """``1/2 ||u - t||^2`` summed over all axes."""
    d = np.asarray(u) - np.asarray(target)
    return 0.5 * float(np.sum(d * d))


def piggyback_solve(
    f,
    target,
    banks,
    alpha,
    steps: StepSizes | None,
    iters: int,
    *,
    h: float = 1.0,
    init: tuple[SaddleState, AdjointState] | None = None,
    loss_grad=None,
    check_finite: bool = True,
) -> tuple[SaddleState, AdjointState]:
    """Run ``iters`` steps of the primal-dual iteration together with its adjoint.

    ``loss_grad(u)`` defaults to ``u - target``.  The Jacobian of each prox
    is applied at the pre-prox point of the same iteration.  With
    ``check_finite=False`` non-finite iterates are left for the caller to
    detect (the trainer drops such samples individually).
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    alpha1, alpha0 = map(float, alpha)
    f = np.asarray(f, dtype=float)
    disc = Discretization(banks, h)
    if steps is None:
        steps = precondition(banks, (*f.shape[-2:], h))
    if loss_grad is None:
        t = np.asarray(target, dtype=float)
        loss_grad = lambda u: u - t
    if init is None:
        state = initial_state(f, disc)
        adj = AdjointState.zeros_like(state)
    else:
        state, adj = init
    u, vK, vL, p = (np.array(a, dtype=float, copy=True) for a in (state.u, state.v_K, state.v_L, state.p))
    U, VK, VL, P = (np.array(a, dtype=float, copy=True) for a in (adj.U, adj.V_K, adj.V_L, adj.P))
    tu, tK, tL, sig, th = steps.tau_u, steps.tau_vK, steps.tau_vL, steps.sigma, steps.theta
    kK, kL = disc.kK, disc.kL
    p_bar = P_bar = None
    for j in range(1, iters + 1):
        p_new = p + sig * disc.coupling(u, vK, vL)
        P_new = P + sig * disc.coupling(U, VK, VL)
        p_bar = p_new + th * (p_new - p)
        P_bar = P_new + th * (P_new - P)
        p, P = p_new, P_new

        d = diffops.div_tensor(p_bar, h)
        D = diffops.div_tensor(P_bar, h)
        gl = loss_grad(u)
        u_t = u - tu * diffops.div_vector(d, h)
        U_t = U - tu * (diffops.div_vector(D, h) + gl)
        u = prox_quadratic(u_t, f, tu)
        U = prox_quadratic_jvp(U_t, tu)

        vL_t = vL - tL * apply_bank(d, kL)
        VL_t = VL - tL * apply_bank(D, kL)
        vL = prox_group_z(vL_t, tL * alpha1)
        VL = prox_group_z_jvp(vL_t, tL * alpha1, VL_t)

        vK_t = vK + tK * apply_bank(p_bar, kK)
        VK_t = VK + tK * apply_bank(P_bar, kK)
        vK = prox_group_z(vK_t, tK * alpha0, K_WEIGHTS)
        VK = prox_group_z_jvp(vK_t, tK * alpha0, VK_t, K_WEIGHTS)

        if check_finite and (j % 100 == 0 or j == iters):
            if not (np.isfinite(U).all() and np.isfinite(P).all()):
                raise SolverDivergence(f"non-finite adjoint iterate at iteration {j}")
            if not np.isfinite(u).all():
                raise SolverDivergence(f"non-finite primal iterate at iteration {j}")
    n0 = state.iterations
    return (
        SaddleState(u, vK, vL, p, p_bar, n0 + iters),
        AdjointState(U, VK, VL, P, P_bar),
    )


def filter_gradients(
    saddle: SaddleState,
    adjoint: AdjointState,
    banks,
    trajectoryless: bool = True,
    *,
    h: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Loss gradients with respect to the K and L kernels.

    Evaluated at the final extrapolated duals ``p_bar``, ``P_bar`` and the
    final primal coefficients.  Leading batch axes are summed.
    ``trajectoryless=False`` is not supported: gradients never need the
    stored trajectory.
    """
    if not trajectoryless:
        raise NotImplementedError("only the trajectoryless estimator is provided")
    bank_K, bank_L = banks
    p_bar = saddle.p if saddle.p_bar is None else saddle.p_bar
    P_bar = adjoint.P if adjoint.P_bar is None else adjoint.P_bar
    if p_bar.shape != P_bar.shape or saddle.v_K.shape != adjoint.V_K.shape or saddle.v_L.shape != adjoint.V_L.shape:
        raise ValueError("saddle and adjoint states have mismatched shapes")
    sK = bank_K.kernels.shape[-1]
    sL = bank_L.kernels.shape[-1]
    gK = -(
        bank_correlation(p_bar, adjoint.V_K * _W, sK)
        + bank_correlation(P_bar, saddle.v_K * _W, sK)
    )
    # E* = -div_tensor
    gL = bank_correlation(diffops.div_tensor(p_bar, h), adjoint.V_L, sL) + bank_correlation(
        diffops.div_tensor(P_bar, h), saddle.v_L, sL
    )
    return gK, gL
