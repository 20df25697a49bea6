import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import solve_bvp

from dumbbellflow.core import FENE, PhysicalParams
from dumbbellflow.inertialess import StabilityError
from dumbbellflow.oracle import convergence_order
from dumbbellflow.stress import StressField
from dumbbellflow.transport import (CoupledConfig, FieldProfile, Forcing, config_echo, coupled_solve,
                                    density_stability_bound, density_step, mixture_divergence, polymer_velocity,
                                    run_id, solvent_momentum_step, steady_streamwise_velocity,
                                    wall_normal_solvent_velocity, write_profiles_csv)

P = PhysicalParams()
vals = st.floats(-5, 5, allow_nan=False)


def _bvp_reference(gap, eta, G, body, walls):
    sol = solve_bvp(lambda y, v: np.vstack([v[1], -(G + body) / eta * np.ones_like(y)]),
                    lambda a, b: np.array([a[0] - walls[0], b[0] - walls[1]]),
                    np.linspace(0, gap, 11), np.zeros((2, 11)), tol=1e-10)
    return sol.sol


def test_streamwise_velocity_against_bvp():
    # constant d tau_xy / dy acts as a uniform body force
    gap, G, body, walls = 2.0, 1.3, 0.4, (0.0, 0.7)
    ref = _bvp_reference(gap, P.eta_s, G, body, walls)
    errs = []
    for n in (8, 16, 32):
        y = (np.arange(n) + 0.5) * gap / n
        v = steady_streamwise_velocity(gap, n, P, Forcing(G, walls), body_force=np.full(n, body))
        errs.append(np.abs(v - ref(y)[0]).max())
    assert convergence_order(errs, [1 / 8, 1 / 16, 1 / 32]).slope == pytest.approx(2, abs=0.2)


def test_couette_is_exact():
    n = 10
    y = (np.arange(n) + 0.5) / n * 3.0
    v = steady_streamwise_velocity(3.0, n, P, Forcing(0.0, (0.0, 2.0)))
    np.testing.assert_allclose(v, 2.0 * y / 3.0, atol=1e-13)


@given(arrays(float, (6, 2), elements=vals), arrays(float, 6, elements=st.floats(0.1, 3)))
def test_polymer_velocity_recovers_force(vs, N):
    y = np.arange(6) + 0.5
    tau = np.zeros((6, 2, 2))
    tau[:, 0, 1] = np.sin(y)
    tau[:, 1, 1] = np.cos(y)
    st_ = StressField(y, tau, N, P.kBT)
    pv = polymer_velocity(vs, st_, N, P, dy=1.0)
    np.testing.assert_allclose(2 * N[:, None] * P.zeta * (pv.vp - vs), pv.force, atol=1e-12)


@given(arrays(float, (5, 2), elements=vals), st.floats(1e-4, 0.1))
def test_normal_solvent_velocity_makes_u_y_vanish(f, V_d):
    p = P.with_(V_d=V_d)
    N = np.linspace(0.5, 1.5, 5)
    phi = N * V_d
    vsy = wall_normal_solvent_velocity(f, p)
    vpy = vsy + f[:, 1] / (2 * p.zeta * N)
    uy = phi * vpy + (1 - phi) * vsy
    assert np.abs(uy).max() <= 1e-14 * max(1.0, np.abs(f).max())


@given(st.integers(0, 2**31))
def test_density_step_conserves_mass(seed):
    rng = np.random.default_rng(seed)
    n, dy = 12, 0.5
    N = 1 + 0.5 * rng.random(n)
    vs = np.zeros((n, 2))
    vs[:, 1] = 0.1 * rng.standard_normal(n)
    tau = np.zeros((n, 2, 2))
    tau[:, 1, 1] = rng.standard_normal(n)
    dt = 0.9 * density_stability_bound(vs, dy, P)
    N1 = density_step(N, vs, tau, dt, P, dy)
    assert N1.sum() == pytest.approx(N.sum(), rel=1e-13)
    N2 = density_step(N, vs, tau, dt, P, dy, periodic=True)
    assert N2.sum() == pytest.approx(N.sum(), rel=1e-13)
    with pytest.raises(StabilityError):
        density_step(N, vs, tau, 3 * dt, P, dy)


def test_momentum_step_relaxes_to_steady_profile():
    n, gap = 16, 2.0
    y = (np.arange(n) + 0.5) * gap / n
    N = np.ones(n)
    prof = FieldProfile(y, N, N * P.V_d, np.zeros((n, 2)), np.zeros((n, 2)), np.zeros((n, 2)), np.zeros(n),
                        N, N, np.zeros((n, 2, 2)), None, 0.0)
    forcing = Forcing(1.0)
    for _ in range(40):
        prof = solvent_momentum_step(prof, 1.0, P, gap, forcing=forcing, force=np.zeros((n, 2)))
    mass = P.rho_s * (1 - prof.phi)
    target = steady_streamwise_velocity(gap, n, P, forcing)
    np.testing.assert_allclose(prof.vs[:, 0], target, rtol=1e-6)
    assert mass.min() > 0
    assert np.abs(mixture_divergence(prof, gap / n)).max() < 1e-14
    with pytest.raises(ValueError):
        solvent_momentum_step(prof, 1.0, P, gap, mode="bogus")


def test_config_validation():
    with pytest.raises(ValueError):
        coupled_solve(CoupledConfig(mode="wrong"))
    with pytest.raises(ValueError):
        coupled_solve(CoupledConfig(relaxation=0.0))
    with pytest.raises(ValueError):
        coupled_solve(CoupledConfig(kinetic=False, stress_mode="wall_aware"))
    with pytest.raises(ValueError):
        coupled_solve(CoupledConfig(kinetic=False, stress_mode="taylor0", law=FENE()))


def test_run_id_is_content_hash():
    a = config_echo(CoupledConfig(ny=8))
    b = config_echo(CoupledConfig(ny=8))
    assert run_id(a) == run_id(b)
    assert run_id(a) != run_id(config_echo(CoupledConfig(ny=9)))


def test_reduced_model_recovers_oldroyd_channel():
    # the reduced model at uniform N is the Oldroyd-B channel: v_s'' solves with total viscosity
    cfg = CoupledConfig(gap=4.0, ny=16, kinetic=False, stress_mode="taylor0", forcing=Forcing(0.2),
                        t_final=200.0, macro_dt=0.05, tol=1e-9)
    res = coupled_solve(cfg)
    pr = res.profile
    assert res.converged and res.mass_drift < 1e-12
    # steady shear stress balances the pressure gradient: eta_s v' + tau_xy = -G (y - L/2)
    y = pr.y
    dvdy = np.gradient(pr.vs[:, 0], y)
    total = P.eta_s * dvdy + pr.tau[:, 0, 1]
    np.testing.assert_allclose(total[2:-2], -0.2 * (y - 2.0)[2:-2], atol=5e-3)


def test_coupled_kinetic_short_run(tmp_path):
    cfg = CoupledConfig(gap=4.0, ny=8, nq=8, forcing=Forcing(0.5), t_final=2000.0, macro_dt=20.0, tol=1e-7,
                        kinetic_stepping="implicit")
    res = coupled_solve(cfg)
    assert res.converged
    assert res.mass_drift < 1e-10
    pr = res.profile
    assert pr.u_identity_residual() < 1e-14
    # impermeable walls with div u = 0
    assert np.abs(pr.u[:, 1]).max() < 1e-15
    assert res.metadata["run_id"] == run_id(config_echo(cfg))
    write_profiles_csv(tmp_path / "p.csv", res.profiles)
    assert (tmp_path / "p.csv").read_text().startswith("# units:")


def test_explicit_and_implicit_agree():
    base = dict(gap=4.0, ny=8, nq=8, forcing=Forcing(0.5), t_final=300.0, tol=1e-8)
    a = coupled_solve(CoupledConfig(macro_dt=20.0, kinetic_stepping="implicit", **base)).profile
    b = coupled_solve(CoupledConfig(macro_dt=0.5, kinetic_stepping="explicit", **base)).profile
    np.testing.assert_allclose(a.vs[:, 0], b.vs[:, 0], rtol=1e-4)
    np.testing.assert_allclose(a.N, b.N, rtol=1e-4)
