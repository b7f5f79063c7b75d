"""Check piggyback filter gradients against finite differences.

A single near-identity L filter is used with a large second-order weight
so the K coefficients vanish and the inner problem converges quickly.
Expect agreement to many digits after roughly a minute of solves.
"""

import numpy as np

from tgvinterp import AdjointState, filter_gradients, pd_solve, piggyback_solve, precondition
from tgvinterp.interp import FilterBank, project_constraints
from tgvinterp.piggyback import quadratic_loss

rng = np.random.default_rng(1)
x = np.linspace(0, 1, 16)
clean = np.add.outer(x, 0.5 * x)
clean[4:11, 5:12] += 0.3
f = clean + 0.05 * rng.standard_normal(clean.shape)

kernels = []
for target, C in (("K", 3), ("L", 2)):
    k = np.zeros((1, C, 3, 3))
    k[:, :, 1, 1] = 1.0
    kernels.append(project_constraints(FilterBank(k + 0.2 * rng.uniform(-1, 1, k.shape), target)))
banks = tuple(kernels)
alpha = (0.02, 0.3)
steps = precondition(banks, (16, 16, 1.0))

base = pd_solve(f, banks, alpha, 20000, steps=steps)
state, adj = piggyback_solve(f, clean, banks, alpha, steps, 20000, init=(base, AdjointState.zeros_like(base)))
_, gL = filter_gradients(state, adj, banks)

eps = 1e-5
for idx in [(0, 0, 1, 1), (0, 1, 0, 2), (0, 0, 2, 1)]:
    losses = []
    for sign in (1, -1):
        k = banks[1].kernels.copy()
        k[idx] += sign * eps
        sol = pd_solve(f, (banks[0], banks[1].with_kernels(k)), alpha, 20000, steps=steps, init=base)
        losses.append(quadratic_loss(sol.u, clean))
    fd = (losses[0] - losses[1]) / (2 * eps)
    print(f"tap {idx}: piggyback {gL[idx]: .8e}  finite difference {fd: .8e}")
