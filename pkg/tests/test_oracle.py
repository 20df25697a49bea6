import numpy as np
import pytest
from hypothesis import given, strategies as st

from dumbbellflow.core import FENE, Hookean, PhysicalParams
from dumbbellflow.oracle import (collision_apply, constitutive_ode, convergence_order, equilibrium_moments,
                                 inertial_dumbbell_covariance, inertialess_dumbbell_covariance, maxwellian,
                                 momentum_grid, oldroyd_b_steady_shear, shear_gradient)


def test_order_examples():
    assert convergence_order([1, 0.25, 0.0625], [1, 0.5, 0.25]).slope == pytest.approx(2)
    assert convergence_order([1, 0.5, 0.25], [1, 0.5, 0.25]).slope == pytest.approx(1)
    assert convergence_order([0.3, 0.3, 0.3], [1, 0.5, 0.25]).slope == pytest.approx(0, abs=1e-12)


def test_order_rejects_bad_input():
    with pytest.raises(ValueError):
        convergence_order([1, 0, 0.1], [1, 0.5, 0.25])
    with pytest.raises(ValueError):
        convergence_order([1, 0.5], [1, 0.5])
    with pytest.raises(ValueError):
        convergence_order([1, 0.5, 0.2], [0.25, 0.5, 1])


@given(st.floats(0.1, 3.0), st.floats(0.01, 1.0))
def test_order_recovers_power_law(order, c):
    h = np.array([1, 0.5, 0.25, 0.125])
    fit = convergence_order(c * h**order, h)
    assert fit.slope == pytest.approx(order, rel=1e-9)
    assert fit.ci_low <= fit.slope <= fit.ci_high


@pytest.mark.parametrize("wi", [0.1, 0.5, 1.0, 5.0])
def test_oldroyd_fixed_point(wi):
    state, tau = constitutive_ode(wi, 1.0, "OldroydB", t_final=40.0)
    np.testing.assert_allclose(state.A, oldroyd_b_steady_shear(wi), atol=1e-8)
    np.testing.assert_allclose(tau, oldroyd_b_steady_shear(wi) - np.eye(2), atol=1e-8)


def test_fene_p_below_oldroyd_and_bounded():
    _, tau_ob = constitutive_ode(2.0, 1.0, "OldroydB", t_final=40.0)
    state, tau_fp = constitutive_ode(2.0, 1.0, "FENE_P", t_final=40.0, b=20.0)
    assert np.trace(state.A) < 20.0
    assert tau_fp[0, 1] < tau_ob[0, 1]
    _, tau_big = constitutive_ode(0.5, 1.0, "FENE_P", t_final=40.0, b=1e6)
    _, tau_ref = constitutive_ode(0.5, 1.0, "OldroydB", t_final=40.0)
    np.testing.assert_allclose(tau_big, tau_ref, atol=1e-4)
    with pytest.raises(ValueError):
        constitutive_ode(1.0, 1.0, "FENE_P")


def test_equilibrium_moments_isotropic():
    p = PhysicalParams()
    np.testing.assert_allclose(equilibrium_moments(Hookean(2.0), p), 0.5 * np.eye(2))
    M = equilibrium_moments(FENE(1.0, 3.0), p)
    assert M[0, 0] == pytest.approx(M[1, 1]) and M[0, 1] == 0
    assert M[0, 0] < 1.0


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("q0", [1.5, 3.0, 10.0])
def test_fene_equilibrium_closed_form(dim, q0):
    # the radial law is a Beta distribution: <q_i q_i> = b / (b + d + 2)
    law = FENE(1.0, q0)
    b = law.b(1.0)
    M = equilibrium_moments(law, PhysicalParams(dim=dim))
    np.testing.assert_allclose(M, b / (b + dim + 2) * np.eye(dim), rtol=1e-8)


@pytest.mark.parametrize("d", [1, 2])
def test_collision_conserves_mass_and_moment(d):
    p, h = momentum_grid(1.0, 128)
    rng = np.random.default_rng(d)
    axes = [p] * d
    G = np.meshgrid(*axes, indexing="ij")
    Phi = maxwellian(axes) * (1 + 0.3 * np.sin(G[0]) + 0.2 * G[0] * (G[-1] - 0.1)) * (1 + 0.1 * rng.random())
    Q = collision_apply(Phi, p)
    dV = h**d
    assert abs(Q.sum() * dV) < 1e-12
    # the first moment of Q(Phi) is minus the first moment of Phi
    for ax in range(d):
        np.testing.assert_allclose((G[ax] * Q).sum() * dV, -(G[ax] * Phi).sum() * dV, rtol=1e-6, atol=1e-12)


def test_maxwellian_kernel_and_moments():
    p, h = momentum_grid(1.0, 128)
    M = maxwellian([p, p])
    assert M.sum() * h * h == pytest.approx(1.0, abs=1e-8)
    P = np.meshgrid(p, p, indexing="ij")
    pp = np.array([[(P[a] * P[b] * M).sum() * h * h for b in range(2)] for a in range(2)])
    np.testing.assert_allclose(pp, np.eye(2), atol=1e-3)


def test_maxwellian_in_discrete_kernel_to_second_order():
    res = []
    for n in (32, 64, 128):
        p, _ = momentum_grid(1.0, n)
        M = maxwellian([p, p])
        res.append(np.abs(collision_apply(M, p)).max() / M.max())
    assert convergence_order(res, [1 / 32, 1 / 64, 1 / 128]).slope == pytest.approx(2, abs=0.1)


def test_covariances_agree_in_the_limit():
    law, kappa = Hookean(), shear_gradient(1.0)
    ref = inertialess_dumbbell_covariance(PhysicalParams(), law, kappa)
    np.testing.assert_allclose(ref, oldroyd_b_steady_shear(1.0), atol=1e-12)
    gaps = [np.abs(inertial_dumbbell_covariance(PhysicalParams(mass=4 * e * e), law, kappa)["qq"] - ref).max()
            for e in (0.2, 0.1, 0.05)]
    assert gaps[0] > gaps[1] > gaps[2]
    eq = inertial_dumbbell_covariance(PhysicalParams(mass=0.3), law, np.zeros((2, 2)))
    np.testing.assert_allclose(eq["qq"], np.eye(2), atol=1e-12)
    np.testing.assert_allclose(eq["ww"], 2 / 0.3 * np.eye(2), atol=1e-12)
