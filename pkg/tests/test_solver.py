import numpy as np
import pytest

import reference_tgv as ref
from conftest import ramp_image
from tgvinterp.diffops import grad
from tgvinterp.interp import handcrafted_bank, identity_bank, random_bank
from tgvinterp.solver import (
    Discretization,
    SolverDivergence,
    StepSizes,
    block_norms,
    duality_gap,
    pd_solve,
    precondition,
    primal_energy,
    tgv_primal_objective,
    tgv_value,
)

PLAIN = (identity_bank("K"), identity_bank("L"))
HAND = (handcrafted_bank("K1"), handcrafted_bank("L3"))


def test_identity_K_has_unit_norm():
    norms, _ = block_norms(Discretization(PLAIN), (8, 8))
    assert norms["K"] == pytest.approx(1.0, abs=1e-12)


def test_step_sizes_satisfy_condition():
    steps = precondition(HAND, (12, 12, 1.0))
    assert steps.condition() == pytest.approx(0.95, rel=1e-12)
    with pytest.raises(ValueError):
        StepSizes(0.1, 0.1, 0.1, -1.0)


def test_constant_image_is_fixed_point():
    f = np.full((10, 9), 0.42)
    st = pd_solve(f, HAND, (0.1, 0.2), 300)
    assert np.abs(st.u - f).max() < 1e-12
    assert np.abs(st.v_K).max() < 1e-12 and np.abs(st.v_L).max() < 1e-12


def test_large_weights_give_affine_least_squares():
    r = np.random.default_rng(3)
    i, j = np.meshgrid(np.arange(32.0), np.arange(32.0), indexing="ij")
    f = 0.2 + 0.01 * i - 0.005 * j + 0.05 * r.standard_normal((32, 32))
    A = np.stack([np.ones(f.size), i.ravel(), j.ravel()], axis=1)
    coef, *_ = np.linalg.lstsq(A, f.ravel(), rcond=None)
    fit = (A @ coef).reshape(f.shape)
    st = pd_solve(f, PLAIN, (1e3, 1e3), 20000)
    assert np.sqrt(np.mean((st.u - fit) ** 2)) <= 1e-2


def test_matches_reference_on_short_run():
    # both solvers reach the same energy up to their shared convergence error
    f = ramp_image(12, 12)
    alpha = (0.1, 0.2)
    ur, wr = ref.solve(f, alpha, 20000)
    st = pd_solve(f, PLAIN, alpha, 20000)
    w = grad(st.u) - st.v_L[0]
    a, b = ref.objective(ur, wr, f, alpha), ref.objective(st.u, w, f, alpha)
    assert abs(a - b) / a < 1e-4
    assert tgv_primal_objective(st.u, w, f, alpha) == pytest.approx(b, rel=1e-12)


def test_duality_gap_shrinks():
    f = ramp_image(12, 12)
    alpha = (0.1, 0.2)
    steps = precondition(HAND, (12, 12, 1.0))
    early = pd_solve(f, HAND, alpha, 200, steps=steps)
    late = pd_solve(f, HAND, alpha, 3000, steps=steps, init=early)
    g0, r0 = duality_gap(early, f, HAND, alpha)
    g1, r1 = duality_gap(late, f, HAND, alpha)
    assert late.iterations == 3200
    # the primal energy ignores the constraint, so the gap may be negative
    assert abs(g1) < abs(g0) and r1 < r0


def test_batched_solve_matches_single():
    f = np.stack([ramp_image(10, 11, seed=s) for s in range(3)])
    alpha = (0.1, 0.2)
    steps = precondition(HAND, (10, 11, 1.0))
    batch = pd_solve(f, HAND, alpha, 150, steps=steps)
    for k in range(3):
        single = pd_solve(f[k], HAND, alpha, 150, steps=steps)
        assert np.allclose(batch.u[k], single.u, atol=1e-13, rtol=0)
        assert np.allclose(batch.v_K[k], single.v_K, atol=1e-13, rtol=0)


def test_energy_decreases_with_iterations():
    f = ramp_image(12, 12)
    alpha = (0.1, 0.2)
    bank = (random_bank("K", 2, 1, np.random.default_rng(0)), handcrafted_bank("L4"))
    a = pd_solve(f, bank, alpha, 100)
    b = pd_solve(f, bank, alpha, 5000)
    assert primal_energy(b, f, alpha) < 0.5 * np.sum((f - f.mean()) ** 2)
    assert duality_gap(b, f, bank, alpha)[1] < duality_gap(a, f, bank, alpha)[1]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    f = ramp_image(8, 8)
    bad = StepSizes(50.0, 50.0, 50.0, 50.0, 1.0)
    with pytest.raises(SolverDivergence):
        pd_solve(f, HAND, (0.1, 0.2), 500, steps=bad, check_every=50)


def test_argument_checks():
    with pytest.raises(ValueError):
        pd_solve(np.zeros((4, 4)), PLAIN, (0.1, 0.2), 0)
    with pytest.raises(ValueError):
        pd_solve(np.zeros((4, 4)), PLAIN, (-0.1, 0.2), 5)
    with pytest.raises(ValueError):
        Discretization((PLAIN[1], PLAIN[0]))


# --- discrete TGV value ------------------------------------------------------


def test_tgv_value_of_affine_is_zero():
    i, j = np.meshgrid(np.arange(12.0), np.arange(10.0), indexing="ij")
    res = tgv_value(0.1 + 0.3 * i - 0.2 * j, HAND, (0.1, 0.2), 500)
    assert res.value <= 1e-12
    assert not res.flagged


@pytest.mark.parametrize("alpha", [(1.0, 2.0), (1.0, 0.5), (0.3, 3.0)])
def test_tgv_value_of_kinked_ramp_matches_conic_solver(alpha):
    pytest.importorskip("cvxpy")
    # 8 x 2 ramp with a single slope change
    u = np.maximum(0.0, np.arange(8.0) - 3.0)[:, None] * np.ones((1, 2))
    expected = ref.tgv_value(u, alpha)
    res = tgv_value(u, PLAIN, alpha, 20000)
    assert res.value == pytest.approx(expected, rel=1e-6)
    assert res.lower_bound <= res.value + 1e-9


def test_tgv_value_scales_with_pixel_size():
    pytest.importorskip("cvxpy")
    u = np.random.default_rng(0).standard_normal((6, 5))
    h = 0.5
    expected = h * h * ref.tgv_value(u, (0.4, 0.9), h)
    res = tgv_value(u, PLAIN, (0.4, 0.9), 20000, h=h)
    assert res.value == pytest.approx(expected, rel=1e-6)


def test_tgv_value_flags_unconverged_runs():
    u = ramp_image(16, 16, noise=0.2)
    res = tgv_value(u, HAND, (0.1, 0.2), 5, tol=1e-12)
    assert res.flagged
    res, (vK, vL, p) = tgv_value(u, HAND, (0.1, 0.2), 5, return_state=True)
    assert vK.shape == (1, 3, 16, 16) and vL.shape == (3, 2, 16, 16)
