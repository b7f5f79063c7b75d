"""Primal-dual solver for TGV denoising with interpolation-filter banks.

The saddle-point problem is

    min_{u, v_K, v_L} max_p  1/2 ||u - f||^2 + alpha0 ||v_K||_Z + alpha1 ||v_L||_Z
                             + <D^2 u - E L* v_L - K* v_K, p>

with the tensor inner product for ``p``.  It is solved by a block-scalar
preconditioned primal-dual iteration: dual ascent on ``p``, extrapolation,
then proximal descent on ``u``, ``v_L`` and ``v_K``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import diffops
from .grid import TENSOR_WEIGHTS, znorm
from .interp import FilterBank, apply_bank, apply_bank_adjoint
from .prox import prox_group_z, prox_quadratic

log = logging.getLogger(__name__)

K_WEIGHTS = TENSOR_WEIGHTS

# primal steps tau_b = balance / ||A_b||; smaller values favour the dual
DEFAULT_BALANCE = 0.3


class SolverDivergence(RuntimeError):
    """Raised when an iterate becomes non-finite."""


class Discretization:
    """The linear operators of the saddle-point problem for one pair of banks."""

    def __init__(self, banks: tuple[FilterBank, FilterBank], h: float = 1.0):
        bank_K, bank_L = banks
        if bank_K.target != "K" or bank_L.target != "L":
            raise ValueError("banks must be given as (K-bank, L-bank)")
        self.bank_K = bank_K
        self.bank_L = bank_L
        self.kK = bank_K.kernels
        self.kL = bank_L.kernels
        self.h = float(h)

    @property
    def banks(self):
        return self.bank_K, self.bank_L

    def D2(self, u):
        return diffops.second_order(u, self.h)

    def D2_adjoint(self, p):
        return diffops.div2(p, self.h)

    def EL_adjoint(self, vL):
        """``E L* v_L``."""
        return diffops.sym_grad(apply_bank_adjoint(vL, self.kL), self.h)

    def LE_adjoint(self, p):
        """``L E* p`` where ``E* = -div_tensor``."""
        return -apply_bank(diffops.div_tensor(p, self.h), self.kL)

    def K(self, p):
        return apply_bank(p, self.kK)

    def K_adjoint(self, vK):
        return apply_bank_adjoint(vK, self.kK)

    def coupling(self, u, vK, vL):
        """``D^2 u - E L* v_L - K* v_K``."""
        return self.D2(u) - self.EL_adjoint(vL) - self.K_adjoint(vK)

    def constraint(self, u, vK, vL):
        """Residual of the constraint ``D^2 u = E L* v_L + K* v_K``."""
        return self.coupling(u, vK, vL)

    def zeros(self, shape):
        """Zero ``(v_K, v_L, p)`` for images of the given (possibly batched) shape."""
        lead = tuple(shape[:-2])
        grid = tuple(shape[-2:])
        vK = np.zeros(lead + (self.bank_K.n, 3) + grid)
        vL = np.zeros(lead + (self.bank_L.n, 2) + grid)
        p = np.zeros(lead + (3,) + grid)
        return vK, vL, p


@dataclass(frozen=True)
class StepSizes:
    tau_u: float
    tau_vK: float
    tau_vL: float
    sigma: float
    theta: float = 1.0
    norms: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("tau_u", "tau_vK", "tau_vL", "sigma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")

    def condition(self) -> float:
        """``sigma * sum_b tau_b ||A_b||^2``; convergence requires < 1."""
        n = self.norms
        return self.sigma * (
            self.tau_u * n.get("D2", 0.0) ** 2
            + self.tau_vK * n.get("K", 0.0) ** 2
            + self.tau_vL * n.get("EL", 0.0) ** 2
        )


def block_norms(disc: Discretization, grid_shape, *, tol=1e-6, max_iter=500, warm=None):
    """Power-iteration estimates of ``||D^2||``, ``||K*||`` and ``||E L*||``.

    Returns ``(norms, vectors)``; ``vectors`` can be passed back as ``warm``
    when the banks change slightly.  Unconverged estimates are inflated by
    10% and logged.
    """
    M, N = grid_shape
    nK, nL = disc.bank_K.n, disc.bank_L.n
    warm = warm or {}
    specs = {
        "D2": (disc.D2, disc.D2_adjoint, (M, N)),
        "K": (disc.K_adjoint, disc.K, (nK, 3, M, N)),
        "EL": (disc.EL_adjoint, lambda p: -disc.LE_adjoint(p), (nL, 2, M, N)),
    }
    norms, vectors = {}, {}
    for seed, (name, (fwd, adj, shape)) in enumerate(specs.items()):
        est, ok, vec = diffops.power_iteration(
            fwd, adj, shape, tol=tol, max_iter=max_iter,
            rng=np.random.default_rng(seed), x0=warm.get(name),
        )
        if not ok:
            log.warning("power iteration for %s did not converge; using 1.1 x %.6g", name, est)
            est *= 1.1
        norms[name] = est
        vectors[name] = vec
    return norms, vectors


def step_sizes_from_norms(norms: dict, safety: float = 0.95, balance: float = DEFAULT_BALANCE) -> StepSizes:
    """Block-scalar steps ``tau_b = balance / ||A_b||`` and matching ``sigma``."""
    total = 0.0
    taus = {}
    for name in ("D2", "K", "EL"):
        nrm = norms.get(name, 0.0)
        taus[name] = balance / nrm if nrm > 0 else 1.0
        total += nrm
    sigma = safety / (balance * total)
    return StepSizes(taus["D2"], taus["K"], taus["EL"], sigma, 1.0, dict(norms))


def precondition(banks, grid, *, safety=0.95, balance=DEFAULT_BALANCE, tol=1e-6, max_iter=500) -> StepSizes:
    """Step sizes for the solver on a grid ``(M, N, h)``.

    ``sigma * sum_b tau_b ||A_b||^2 = safety``, which bounds the norm of the
    preconditioned coupling operator below one.
    """
    M, N, h = grid
    disc = Discretization(banks, h)
    norms, _ = block_norms(disc, (M, N), tol=tol, max_iter=max_iter)
    return step_sizes_from_norms(norms, safety, balance)


@dataclass(frozen=True)
class SaddleState:
    u: np.ndarray
    v_K: np.ndarray
    v_L: np.ndarray
    p: np.ndarray
    p_bar: np.ndarray | None = None
    iterations: int = 0

    def copy(self) -> "SaddleState":
        return SaddleState(
            self.u.copy(), self.v_K.copy(), self.v_L.copy(), self.p.copy(),
            None if self.p_bar is None else self.p_bar.copy(), self.iterations,
        )


def initial_state(f, disc: Discretization) -> SaddleState:
    f = np.asarray(f, dtype=float)
    vK, vL, p = disc.zeros(f.shape)
    return SaddleState(f.copy(), vK, vL, p)


def _check_finite(arr, what, j):
    if not np.isfinite(arr).all():
        raise SolverDivergence(
            f"non-finite {what} at iteration {j}; the step sizes violate the convergence condition"
        )


def pd_solve(
    f,
    banks,
    alpha,
    iters: int,
    *,
    h: float = 1.0,
    steps: StepSizes | None = None,
    init: SaddleState | None = None,
    callback: Callable[[int, SaddleState], None] | None = None,
    check_every: int = 100,
) -> SaddleState:
    """Run ``iters`` primal-dual iterations for TGV denoising of ``f``.

    ``f`` may carry leading batch axes; all images share the step sizes.
    ``alpha = (alpha1, alpha0)`` weights the first- and second-order terms.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    alpha1, alpha0 = map(float, alpha)
    if alpha1 < 0 or alpha0 < 0:
        raise ValueError("alpha must be non-negative")
    f = np.asarray(f, dtype=float)
    disc = Discretization(banks, h)
    if steps is None:
        steps = precondition(banks, (*f.shape[-2:], h))
    state = initial_state(f, disc) if init is None else init
    u, vK, vL, p = (np.array(a, dtype=float, copy=True) for a in (state.u, state.v_K, state.v_L, state.p))
    tu, tK, tL, sig, th = steps.tau_u, steps.tau_vK, steps.tau_vL, steps.sigma, steps.theta
    p_bar = p
    for j in range(1, iters + 1):
        p_new = p + sig * disc.coupling(u, vK, vL)
        p_bar = p_new + th * (p_new - p)
        p = p_new
        d = diffops.div_tensor(p_bar, h)
        u = prox_quadratic(u - tu * diffops.div_vector(d, h), f, tu)
        vL = prox_group_z(vL - tL * apply_bank(d, disc.kL), tL * alpha1)
        vK = prox_group_z(vK + tK * apply_bank(p_bar, disc.kK), tK * alpha0, K_WEIGHTS)
        if j % check_every == 0 or j == iters:
            _check_finite(u, "primal iterate", j)
            _check_finite(p, "dual iterate", j)
        if callback is not None:
            callback(j, SaddleState(u, vK, vL, p, p_bar, state.iterations + j))
    return SaddleState(u, vK, vL, p, p_bar, state.iterations + iters)


# --- objectives and certificates --------------------------------------------


def primal_energy(state: SaddleState, f, alpha) -> float:
    """``1/2 ||u - f||^2 + alpha0 ||v_K||_Z + alpha1 ||v_L||_Z`` (ignores feasibility)."""
    alpha1, alpha0 = alpha
    u = np.asarray(state.u)
    return float(
        0.5 * np.sum((u - f) ** 2)
        + alpha1 * znorm(state.v_L)
        + alpha0 * znorm(state.v_K, K_WEIGHTS)
    )


def constraint_residual(state: SaddleState, banks, h: float = 1.0) -> float:
    """Frobenius norm of ``D^2 u - E L* v_L - K* v_K``."""
    r = Discretization(banks, h).coupling(state.u, state.v_K, state.v_L)
    return float(np.sqrt(np.sum(r * r * TENSOR_WEIGHTS[:, None, None])))


def feasible_dual(p, banks, alpha, h: float = 1.0) -> np.ndarray:
    """Scale ``p`` into the dual feasible set ``||L E* p||* <= a1, ||K p||* <= a0``."""
    alpha1, alpha0 = alpha
    disc = Discretization(banks, h)
    from .grid import group_norms

    lead = p.shape[:-3]
    axes = tuple(range(len(lead), len(lead) + 3))
    rL = group_norms(disc.LE_adjoint(p)).max(axis=axes, initial=0.0) / alpha1
    rK = group_norms(disc.K(p), K_WEIGHTS).max(axis=axes, initial=0.0) / alpha0
    scale = 1.0 / np.maximum(1.0, np.maximum(rL, rK))
    return p * np.asarray(scale)[..., None, None, None]


def dual_energy(p, f, banks, alpha, h: float = 1.0) -> float:
    """Dual objective ``<f, div2 q> - 1/2 ||div2 q||^2`` at the feasible rescaling ``q`` of ``p``."""
    q = feasible_dual(p, banks, alpha, h)
    d = diffops.div2(q, h)
    return float(np.sum(f * d) - 0.5 * np.sum(d * d))


def tgv_primal_objective(u, w, f, alpha, h: float = 1.0) -> float:
    """Plain TGV denoising energy ``1/2||u-f||^2 + a1||Du - w|| + a0||Ew||_F``."""
    alpha1, alpha0 = alpha
    r = diffops.grad(u, h) - w
    return float(
        0.5 * np.sum((u - f) ** 2)
        + alpha1 * znorm(r[None])
        + alpha0 * znorm(diffops.sym_grad(w, h)[None], TENSOR_WEIGHTS)
    )


def duality_gap(state: SaddleState, f, banks, alpha, h: float = 1.0) -> tuple[float, float]:
    """``(primal - dual, constraint residual)``; the gap is a certificate once the residual is ~0."""
    gap = primal_energy(state, f, alpha) - dual_energy(state.p, f, banks, alpha, h)
    return gap, constraint_residual(state, banks, h)


class TGVValue(NamedTuple):
    value: float
    residual: float
    lower_bound: float
    flagged: bool


def tgv_value(
    u,
    banks,
    alpha,
    iters: int,
    *,
    h: float = 1.0,
    tol: float = 1e-6,
    steps: StepSizes | None = None,
    init: tuple | None = None,
    return_state: bool = False,
    check_every: int = 500,
):
    """Discrete ``TGV^2_{alpha,h}(u)``.

    Solves ``min h^2 (alpha1 ||v_L||_Z + alpha0 ||v_K||_Z)`` subject to
    ``D^2 u = E L* v_L + K* v_K`` by the primal-dual iteration with ``u``
    fixed.  The relative constraint residual is returned as a certificate,
    together with the dual lower bound ``h^2 <D^2 u, q>`` for the feasible
    rescaling ``q`` of the final dual iterate.  ``flagged`` is set when the
    relative residual exceeds ``tol``.

    Every ``check_every`` iterations the run stops early once the residual
    is below ``tol`` and the value is within ``tol`` (relative) of the
    lower bound; ``iters`` is then only an upper limit.
    """
    alpha1, alpha0 = map(float, alpha)
    u = np.asarray(u, dtype=float)
    disc = Discretization(banks, h)
    if steps is None:
        norms, _ = block_norms(disc, u.shape[-2:])
        norms = {k: v for k, v in norms.items() if k != "D2"}
        steps = step_sizes_from_norms(norms)
    tK, tL, sig = steps.tau_vK, steps.tau_vL, steps.sigma
    b = disc.D2(u)
    if init is None:
        vK, vL, p = disc.zeros(u.shape)
    else:
        vK, vL, p = (np.array(a, dtype=float, copy=True) for a in init)
    wsum = lambda a: float(np.sqrt(np.sum(a * a * TENSOR_WEIGHTS[:, None, None])))
    # relative to D^2 u, or to the image scale when u is (numerically) affine
    floor = 1e-9 * float(np.sqrt(np.sum(u * u))) / (h * h)
    scale = max(wsum(b), floor, 1e-300)

    def certificate():
        r = b - disc.EL_adjoint(vL) - disc.K_adjoint(vK)
        value = h * h * (alpha1 * znorm(vL) + alpha0 * znorm(vK, K_WEIGHTS))
        q = feasible_dual(p, banks, (alpha1, alpha0), h)
        lower = h * h * float(np.sum(b * q * TENSOR_WEIGHTS[:, None, None]))
        return TGVValue(value, wsum(r) / scale, lower, False)

    for j in range(1, iters + 1):
        p_new = p + sig * (b - disc.EL_adjoint(vL) - disc.K_adjoint(vK))
        p_bar = 2.0 * p_new - p
        p = p_new
        vL = prox_group_z(vL - tL * apply_bank(diffops.div_tensor(p_bar, h), disc.kL), tL * alpha1)
        vK = prox_group_z(vK + tK * apply_bank(p_bar, disc.kK), tK * alpha0, K_WEIGHTS)
        if check_every and j % check_every == 0 and j < iters:
            _check_finite(vK, "coefficient iterate", j)
            c = certificate()
            if c.residual <= tol and c.value - c.lower_bound <= tol * max(abs(c.value), 1e-12):
                break
    _check_finite(vK, "coefficient iterate", iters)
    c = certificate()
    result = c._replace(flagged=c.residual > tol)
    if return_state:
        return result, (vK, vL, p)
    return result
