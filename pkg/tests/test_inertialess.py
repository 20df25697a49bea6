import numpy as np
import pytest
from hypothesis import given, strategies as st

from dumbbellflow.core import FENE, Channel, FreeSpace, Hookean, PeriodicBox, PhysicalParams
from dumbbellflow.flows import PoiseuilleFlow, ShearFlow, ZeroFlow
from dumbbellflow.inertialess import (EnsembleInertialess, FokkerPlanckOperator, KineticGrid, StabilityError,
                                      equilibrium_field, fp_steady, gaussian_field, initial_inertialess_ensemble,
                                      load_field_npz, marginal_density, save_field_npz, second_moments,
                                      step_inertialess_sde, total_mass, write_field_csv)
from dumbbellflow.oracle import oldroyd_b_steady_shear

P = PhysicalParams()


@pytest.fixture(scope="module")
def channel_grid():
    return KineticGrid(Channel(4.0), Hookean(), P, ny=12, nq=12)


def test_channel_mask_keeps_both_beads_inside(channel_grid):
    g = channel_grid
    j, _, k = np.nonzero(g.mask)
    reach = 0.5 * np.abs(g.qy[k])
    assert np.all(g.y[j] - reach >= -1e-9) and np.all(g.y[j] + reach <= 4.0 + 1e-9)
    # every wall cell carries admissible connectors
    assert g.mask[0].any() and g.mask[-1].any()
    # qy = 0 is a grid line
    assert np.isclose(np.abs(g.qy).min(), 0.0)


def test_theta_is_territory_fraction(channel_grid):
    g = channel_grid
    assert np.all((g.theta >= 0) & (g.theta <= 1.5))
    # the qy = 0 column sees the whole gap
    k0 = np.argmin(np.abs(g.qy))
    assert (g.theta[:, k0] * g.dy).sum() == pytest.approx(4.0)


def test_equilibrium_mass_and_density(channel_grid):
    f = equilibrium_field(channel_grid, N0=2.0)
    assert total_mass(f) == pytest.approx(2.0 * 4.0, rel=1e-12)
    N = marginal_density(f)
    assert N.sum() * channel_grid.dy == pytest.approx(total_mass(f), rel=1e-12)
    # wall depletion at equilibrium, symmetric profile
    assert N[0] < N[len(N) // 2]
    np.testing.assert_allclose(N, N[::-1], rtol=1e-12)


@given(st.integers(0, 2**31))
def test_rhs_conserves_mass(seed):
    g = KineticGrid(Channel(3.0), Hookean(), P, ny=8, nq=8)
    rng = np.random.default_rng(seed)
    psi = np.where(g.mask, rng.random(g.shape), 0.0)
    op = FokkerPlanckOperator(g, P, PoiseuilleFlow(3.0, rng.uniform(0, 3)))
    r = op.rhs(psi)
    assert abs(np.sum(g.weight * r)) <= 1e-12 * np.sum(g.weight * np.abs(r))


def test_matrix_matches_rhs(channel_grid):
    op = FokkerPlanckOperator(channel_grid, P, PoiseuilleFlow(4.0, 2.0))
    rng = np.random.default_rng(0)
    psi = np.where(channel_grid.mask, rng.random(channel_grid.shape), 0.0)
    np.testing.assert_allclose(op.matrix() @ psi.ravel(), op.rhs(psi).ravel(), atol=1e-12)


def test_explicit_step_positive_and_bound(channel_grid):
    op = FokkerPlanckOperator(channel_grid, P, PoiseuilleFlow(4.0, 2.0))
    rng = np.random.default_rng(2)
    f = equilibrium_field(channel_grid).copy(psi=np.where(channel_grid.mask, rng.random(channel_grid.shape), 0.0))
    m0 = total_mass(f)
    for _ in range(20):
        f = op.step(f, 0.9 * op.dt_max)
    assert f.psi.min() >= 0
    assert total_mass(f) == pytest.approx(m0, rel=1e-12)
    with pytest.raises(StabilityError) as err:
        op.step(f, 2.5 * op.dt_max)
    assert err.value.dt_max == pytest.approx(op.dt_max)


def test_equilibrium_is_steady(channel_grid):
    f = equilibrium_field(channel_grid)
    op = FokkerPlanckOperator(channel_grid, P, ZeroFlow())
    assert np.abs(op.rhs(f.psi)).max() < 1e-12 * f.psi.max()


def test_implicit_step_and_steady_state(channel_grid):
    eq = equilibrium_field(channel_grid)
    op = FokkerPlanckOperator(channel_grid, P, PoiseuilleFlow(4.0, 1.0))
    f1 = op.implicit_step(eq, 1.0)
    assert total_mass(f1) == pytest.approx(total_mass(eq), rel=1e-11)
    psi, hist = op.steady_state(eq.psi, tol=1e-10)
    assert hist[-1] < 1e-10
    assert np.abs(op.rhs(psi)).max() < 1e-8 * psi.max()
    # the time march reaches the same state
    march = fp_steady(eq.copy(psi=psi), PoiseuilleFlow(4.0, 1.0), P, tol=1e-9)
    np.testing.assert_allclose(march.field.psi, psi, atol=1e-7 * psi.max())


def test_hookean_shear_density_unchanged(channel_grid):
    # in rectilinear shear the (y, qy) marginal of a Hookean dumbbell does not see the flow
    eq = equilibrium_field(channel_grid)
    op = FokkerPlanckOperator(channel_grid, P, PoiseuilleFlow(4.0, 2.0))
    psi, _ = op.steady_state(eq.psi)
    np.testing.assert_allclose(marginal_density(eq.copy(psi=psi)), marginal_density(eq), rtol=1e-7)


def test_free_space_shear_matches_oldroyd():
    g = KineticGrid(FreeSpace(), Hookean(), P, nq=48)
    eq = equilibrium_field(g)
    psi, _ = FokkerPlanckOperator(g, P, ShearFlow(0.5)).steady_state(eq.psi)
    M = second_moments(eq.copy(psi=psi))[0]
    np.testing.assert_allclose(M, oldroyd_b_steady_shear(0.5), atol=0.02)


def test_gaussian_field_moments():
    g = KineticGrid(FreeSpace(), Hookean(), P, nq=64)
    C = np.array([[1.5, 0.3], [0.3, 0.8]])
    # the q-box cuts the widest direction at about 4.9 standard deviations
    np.testing.assert_allclose(second_moments(gaussian_field(g, C))[0], C, atol=1e-4)


def test_unknown_mode_and_dim():
    g = KineticGrid(FreeSpace(), Hookean(), P, nq=8)
    with pytest.raises(ValueError):
        FokkerPlanckOperator(g, P, ZeroFlow(), mode="bogus")
    with pytest.raises(ValueError):
        KineticGrid(FreeSpace(), Hookean(), P.with_(dim=3), nq=8)


def test_field_io_round_trip(tmp_path, channel_grid):
    f = equilibrium_field(channel_grid)
    save_field_npz(tmp_path / "f.npz", f)
    g = load_field_npz(tmp_path / "f.npz", channel_grid)
    np.testing.assert_array_equal(g.psi, f.psi)
    write_field_csv(tmp_path / "f.csv", f)
    first = (tmp_path / "f.csv").read_text().splitlines()[:2]
    assert first[0].startswith("# units:") and first[1] == "y,qx,qy,psi"


# --------------------------------------------------------------- SDE


def test_initial_ensemble_inside():
    ens = initial_inertialess_ensemble(2000, Hookean(), P, Channel(2.0), seed=1)
    for r in (ens.r1, ens.r2):
        assert np.all((r[:, 1] >= 0) & (r[:, 1] <= 2.0))


@given(st.integers(0, 1000))
def test_sde_stays_in_channel(seed):
    geom = Channel(1.5)
    ens = initial_inertialess_ensemble(200, Hookean(), P, geom, seed=seed)
    for _ in range(20):
        ens = step_inertialess_sde(ens, 0.05, PoiseuilleFlow(1.5, 3.0), P, Hookean(), geom)
    for r in (ens.r1, ens.r2):
        assert np.all((r[:, 1] >= 0) & (r[:, 1] <= 1.5))


def test_fene_sde_stays_admissible():
    law = FENE(1.0, 2.0)
    ens = initial_inertialess_ensemble(500, law, P, FreeSpace(), seed=3)
    for _ in range(100):
        ens = step_inertialess_sde(ens, 0.05, ShearFlow(5.0), P, law, FreeSpace())
    assert np.all(np.sum(ens.q**2, -1) < 4.0)


def test_sde_reproducible_and_noise_injection():
    geom = PeriodicBox(5.0)
    a = initial_inertialess_ensemble(100, Hookean(), P, geom, seed=4)
    b = EnsembleInertialess(a.x.copy(), a.q.copy(), seed=4)
    xi = a.rng.normals(a.step, a.ids, 4).reshape(100, 2, 2)
    a1 = step_inertialess_sde(a, 0.01, ZeroFlow(), P, Hookean(), geom)
    b1 = step_inertialess_sde(b, 0.01, ZeroFlow(), P, Hookean(), geom, noise=xi)
    np.testing.assert_array_equal(a1.q, b1.q)
    with pytest.raises(ValueError):
        step_inertialess_sde(a, 0.0, ZeroFlow(), P, Hookean(), geom)


def test_sde_equilibrium_variance():
    law, geom = Hookean(), FreeSpace()
    ens = initial_inertialess_ensemble(20_000, law, P, geom, seed=5)
    for _ in range(300):
        ens = step_inertialess_sde(ens, 0.01, ZeroFlow(), P, law, geom)
    # Euler-Maruyama stationary variance for a = 2H/zeta is 1 / (1 - a dt / 2)
    target = 1.0 / (1 - 0.5 * 0.5 * 0.01)
    M = ens.q.T @ ens.q / ens.q.shape[0]
    se = np.sqrt(2.0 / ens.q.shape[0]) * target
    assert abs(M[0, 0] - target) < 4 * se and abs(M[1, 1] - target) < 4 * se


@given(st.lists(st.floats(-0.3, 0.3), min_size=4, max_size=4))
def test_second_order_truncation_exact_for_cubic_flow(coeffs):
    # bead velocity differences and means of a cubic profile have no terms beyond (q d/dy)^3
    from dumbbellflow.flows import PolynomialFlow

    g = KineticGrid(Channel(6.0), Hookean(), P, ny=10, nq=10)
    psi = np.where(g.mask, np.random.default_rng(0).random(g.shape), 0.0)
    flow = PolynomialFlow(tuple(coeffs))
    a = FokkerPlanckOperator(g, P, flow, "exact").rhs(psi)
    b = FokkerPlanckOperator(g, P, flow, "truncated_order2").rhs(psi)
    assert np.abs(a - b).max() <= 1e-13 * np.abs(a).max()


def test_truncation_orders_in_periodic_flow():
    from dumbbellflow.flows import KolmogorovFlow
    from dumbbellflow.oracle import convergence_order

    lengths = (8.0, 16.0, 32.0, 64.0)
    err = {"truncated_order0": [], "truncated_order2": []}
    for L in lengths:
        g = KineticGrid(PeriodicBox(L), Hookean(), P, ny=16, nq=12)
        psi = gaussian_field(g, np.eye(2)).psi
        flow = KolmogorovFlow(1.0, L)
        ref = FokkerPlanckOperator(g, P, flow, "exact").rhs(psi)
        for m in err:
            err[m].append(np.abs(FokkerPlanckOperator(g, P, flow, m).rhs(psi) - ref).max() / np.abs(ref).max())
    ratio = [1 / L for L in lengths]
    assert abs(convergence_order(err["truncated_order0"], ratio).slope - 2) <= 0.5
    assert abs(convergence_order(err["truncated_order2"], ratio).slope - 4) <= 0.5
