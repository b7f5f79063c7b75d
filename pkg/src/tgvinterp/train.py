"""Bilevel learning of the filter banks.

The outer problem minimises the mean quadratic loss between the denoised
images and their targets over the filter coefficients.  Gradients come from
the piggyback iteration, warm-started per sample across outer steps, and
the update is a block-wise Adam step followed by projection onto the sum
constraints.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .interp import (
    SUM_TO_ONE,
    FilterBank,
    orbit,
    project_constraints,
    project_kernels,
    pull_back_gradient,
    representatives,
    support_mask,
    symmetrize_bank,
)
from .piggyback import AdjointState, filter_gradients, piggyback_solve
from .solver import (
    DEFAULT_BALANCE,
    Discretization,
    SaddleState,
    block_norms,
    initial_state,
    step_sizes_from_norms,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    outer_iters: int = 3000
    inner_iters: int = 100
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    constraint: str = SUM_TO_ONE
    symmetric: bool = False
    alpha: tuple[float, float] = (0.1, 0.2)
    seed: int = 0
    h: float = 1.0
    balance: float = DEFAULT_BALANCE
    plateau_tol: float | None = None
    plateau_window: int = 200
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.outer_iters < 0 or self.inner_iters < 1:
            raise ValueError("iteration counts must be positive")
        if not self.lr > 0 or not self.eps > 0:
            raise ValueError("learning rate and epsilon must be positive")
        b1, b2 = self.betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        object.__setattr__(self, "betas", tuple(map(float, self.betas)))
        object.__setattr__(self, "alpha", tuple(map(float, self.alpha)))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        for key in ("betas", "alpha"):
            if key in known:
                known[key] = tuple(known[key])
        return cls(**known)


# --- block-wise Adam -------------------------------------------------------


@dataclass
class AdamMoments:
    """First moments per coefficient, second moments per kernel block."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, shape) -> "AdamMoments":
        return cls(np.zeros(shape), np.zeros(shape[:-2]), 0)


def adam_step_blockwise(params, grads, moments: AdamMoments, t: int, config: TrainConfig, mask=None):
    """One Adam step in which every ``(s, s)`` kernel is a block.

    The second moment is the mean squared gradient over the block, so the
    step inside a block is a uniform rescaling of the (momentum-averaged)
    gradient and the affine sum constraint interacts cleanly with it.
    ``mask`` restricts both the statistics and the update to the free taps.
    Returns the unprojected parameters and the new moments.
    """
    b1, b2 = config.betas
    g = np.asarray(grads, dtype=float)
    if mask is not None:
        g = np.where(mask, g, 0.0)
        count = np.maximum(mask.sum(axis=(-2, -1)), 1)
    else:
        count = g.shape[-1] * g.shape[-2]
    m = b1 * moments.m + (1 - b1) * g
    v = b2 * moments.v + (1 - b2) * (g * g).sum(axis=(-2, -1)) / count
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    step = config.lr * m_hat / (np.sqrt(v_hat)[..., None, None] + config.eps)
    if mask is not None:
        step = np.where(mask, step, 0.0)
    return np.asarray(params, dtype=float) - step, AdamMoments(m, v, t)


def bank_step(bank: FilterBank, grad, moments: AdamMoments, t: int, config: TrainConfig):
    """Adam step on a bank followed by projection onto its constraint set.

    Symmetric banks update the orbit representatives and regenerate the
    rotated copies.
    """
    mask = support_mask(bank)
    if bank.symmetric:
        g = pull_back_gradient(bank, grad)
        reps, moments = adam_step_blockwise(
            representatives(bank), g, moments, t, config, mask[: bank.n // 4]
        )
        reps, gamma = project_kernels(reps, mask[: bank.n // 4], bank.constraint)
        new = replace(bank, kernels=orbit(reps))
        if bank.constraint != SUM_TO_ONE:
            new = replace(new, gamma=gamma)
        return new, moments
    kernels, moments = adam_step_blockwise(bank.kernels, grad, moments, t, config, mask)
    return project_constraints(bank.with_kernels(kernels)), moments


def _param_shape(bank: FilterBank):
    return representatives(bank).shape


# --- outer loop ------------------------------------------------------------


@dataclass
class TrainResult:
    banks: tuple[FilterBank, FilterBank]
    history: list[tuple[int, float]]
    best_step: int
    best_loss: float
    final_banks: tuple[FilterBank, FilterBank] | None = None
    skipped: list[tuple[int, int]] = field(default_factory=list)


def prepare_banks(banks, config: TrainConfig):
    """Apply the configured constraint mode and symmetry to the initial banks."""
    out = []
    for bank in banks:
        bank = replace(bank, constraint=config.constraint)
        if config.symmetric and bank.target == "L":
            bank = symmetrize_bank(bank)
        out.append(project_constraints(bank))
    return tuple(out)


def _loss_per_sample(u, t):
    d = u - t
    return 0.5 * (d * d).sum(axis=(-2, -1))


def bilevel_train(
    dataset,
    init_banks,
    config: TrainConfig,
    *,
    checkpoint_dir=None,
    callback: Callable[[int, float, tuple], None] | None = None,
) -> TrainResult:
    """Learn ``(K, L)`` banks on ``dataset = (f, t)`` with arrays of shape ``(S, M, N)``.

    Each outer step runs ``inner_iters`` piggyback iterations on all samples
    (batched, warm-started from the previous step), averages the filter
    gradients, applies a block-wise Adam step per bank and projects onto the
    sum constraints.  The recorded loss at step ``k`` is the mean loss of
    the inner iterate computed with the banks of step ``k``; the banks with
    the lowest recorded loss are returned.
    """
    f, t = (np.asarray(a, dtype=float) for a in dataset)
    if f.ndim == 2:
        f, t = f[None], t[None]
    if f.shape != t.shape or f.shape[0] == 0:
        raise ValueError("dataset must hold equally shaped, non-empty (f, t) stacks")
    S = f.shape[0]
    alpha = config.alpha
    banks = prepare_banks(init_banks, config)
    disc = Discretization(banks, config.h)
    saddle = initial_state(f, disc)
    adjoint = AdjointState.zeros_like(saddle)
    moments = [AdamMoments.zeros(_param_shape(b)) for b in banks]
    norms, warm = block_norms(disc, f.shape[-2:])
    steps = step_sizes_from_norms(norms, balance=config.balance)

    history: list[tuple[int, float]] = []
    skipped: list[tuple[int, int]] = []
    best = (np.inf, 0, banks)
    ckpt = Path(checkpoint_dir) if checkpoint_dir else None
    if ckpt:
        ckpt.mkdir(parents=True, exist_ok=True)

    for k in range(config.outer_iters + 1):
        with np.errstate(all="ignore"):
            saddle, adjoint = piggyback_solve(
                f, t, banks, alpha, steps, config.inner_iters,
                h=config.h, init=(saddle, adjoint), check_finite=False,
            )
        ok = np.isfinite(saddle.u).all(axis=(-2, -1)) & np.isfinite(adjoint.U).all(axis=(-2, -1))
        ok &= np.isfinite(saddle.p).all(axis=(-3, -2, -1)) & np.isfinite(adjoint.P).all(axis=(-3, -2, -1))
        if not ok.all():
            bad = np.flatnonzero(~ok)
            if bad.size == S:
                raise RuntimeError(f"all inner solves diverged at outer step {k}")
            log.warning("outer step %d: skipping diverged samples %s", k, bad.tolist())
            skipped.extend((k, int(i)) for i in bad)
            saddle, adjoint = _reset_samples(saddle, adjoint, f, disc, bad)
        loss = float(_loss_per_sample(saddle.u[ok], t[ok]).mean())
        history.append((k, loss))
        if loss < best[0]:
            best = (loss, k, banks)
        if callback is not None:
            callback(k, loss, banks)
        if ckpt and config.checkpoint_every and k % config.checkpoint_every == 0:
            save_checkpoint(ckpt, banks, config, k, loss, history)
        if k == config.outer_iters or _plateaued(history, config):
            break

        sel = _select(saddle, adjoint, ok)
        gK, gL = filter_gradients(*sel, banks, h=config.h)
        n_ok = int(ok.sum())
        grads = (gK / n_ok, gL / n_ok)
        new = []
        for i, (bank, g) in enumerate(zip(banks, grads)):
            nb, moments[i] = bank_step(bank, g, moments[i], k + 1, config)
            new.append(nb)
        banks = tuple(new)
        disc = Discretization(banks, config.h)
        norms, warm = block_norms(disc, f.shape[-2:], warm=warm)
        steps = step_sizes_from_norms(norms, balance=config.balance)

    result = TrainResult(best[2], history, best[1], best[0], final_banks=banks, skipped=skipped)
    if ckpt:
        save_checkpoint(ckpt, result.banks, config, result.best_step, result.best_loss, history, name="best")
    return result


def _select(saddle: SaddleState, adjoint: AdjointState, ok):
    if ok.all():
        return saddle, adjoint
    pick = lambda a: None if a is None else a[ok]
    return (
        SaddleState(*(pick(getattr(saddle, n)) for n in ("u", "v_K", "v_L", "p", "p_bar")), saddle.iterations),
        AdjointState(*(pick(getattr(adjoint, n)) for n in ("U", "V_K", "V_L", "P", "P_bar"))),
    )


def _reset_samples(saddle, adjoint, f, disc, bad):
    cold = initial_state(f[bad], disc)
    arrays = {n: getattr(saddle, n).copy() for n in ("u", "v_K", "v_L", "p")}
    for n in arrays:
        arrays[n][bad] = getattr(cold, n)
    adj = {n: getattr(adjoint, n).copy() for n in ("U", "V_K", "V_L", "P")}
    for n in adj:
        adj[n][bad] = 0.0
    return SaddleState(**arrays, iterations=saddle.iterations), AdjointState(**adj)


def _plateaued(history, config: TrainConfig) -> bool:
    if config.plateau_tol is None or len(history) <= config.plateau_window:
        return False
    old = min(l for _, l in history[: -config.plateau_window])
    new = min(l for _, l in history[-config.plateau_window :])
    return old - new <= config.plateau_tol * abs(old)


# --- checkpoints -----------------------------------------------------------


def save_checkpoint(directory, banks, config: TrainConfig, step: int, loss: float, history, name=None):
    """Write ``<name>_K.json``, ``<name>_L.json``, a metadata sidecar and the loss CSV."""
    directory = Path(directory)
    stem = name or f"step{step:06d}"
    bank_K, bank_L = banks
    bank_K.save(directory / f"{stem}_K.json")
    bank_L.save(directory / f"{stem}_L.json")
    meta = {"config": config.to_dict(), "step": int(step), "loss": float(loss)}
    (directory / f"{stem}_meta.json").write_text(json.dumps(meta, indent=1))
    write_loss_history(directory / "loss_history.csv", history)


def write_loss_history(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "train_loss"])
        for step, loss in history:
            w.writerow([step, repr(float(loss))])


def load_checkpoint(directory, name="best"):
    directory = Path(directory)
    banks = (
        FilterBank.load(directory / f"{name}_K.json"),
        FilterBank.load(directory / f"{name}_L.json"),
    )
    meta = json.loads((directory / f"{name}_meta.json").read_text())
    return banks, meta
