import numpy as np
import pytest
from hypothesis import given, strategies as st

from dumbbellflow.acceptance import smooth_test_function
from dumbbellflow.core import Channel, Hookean, PeriodicBox, PhysicalParams
from dumbbellflow.flows import ShearFlow
from dumbbellflow.inertialess import KineticGrid, KineticField, equilibrium_field, fp_steady, marginal_density
from dumbbellflow.stress import (cell_spring_force, derivative_y, direct_spring_force, face_divergence,
                                 face_positions, spring_stress, stress_homogeneous, stress_taylor,
                                 stress_wall_aware, thermal_force, total_polymer_force, wall_extrapolate,
                                 wall_stress_ratio, weak_identity_residual, write_stress_csv)

P = PhysicalParams()


@pytest.fixture(scope="module")
def grid():
    return KineticGrid(Channel(4.0), Hookean(), P, ny=12, nq=12)


def random_field(g, seed):
    rng = np.random.default_rng(seed)
    return KineticField(g, np.where(g.mask, rng.random(g.shape), 0.0))


@given(st.integers(0, 2**31))
def test_cell_stress_divergence_is_pair_force(seed):
    g = KineticGrid(Channel(4.0), Hookean(), P, ny=10, nq=10)
    f = random_field(g, seed)
    faces = spring_stress(f, face_positions(g), method="cell")
    fs = cell_spring_force(f)
    np.testing.assert_allclose(face_divergence(faces, g.dy), fs, atol=1e-12 * np.abs(fs).max())


def test_cell_traction_vanishes_on_walls(grid):
    # only qy = 0 connectors touch a wall, and they carry no y-traction
    f = random_field(grid, 3)
    faces = spring_stress(f, face_positions(grid), method="cell")
    assert np.abs(faces[[0, -1], 1, :]).max() <= 1e-13 * np.abs(faces).max()


def test_equilibrium_bulk_stress_is_isotropic_pressure():
    g = KineticGrid(Channel(8.0), Hookean(), P, ny=24, nq=12)
    f = equilibrium_field(g)
    mid = slice(g.ny // 2 - 1, g.ny // 2 + 1)
    for m in ("gauss", "segment", "cell"):
        st_ = stress_wall_aware(f, method=m)
        # four l0 from either wall the walls are out of reach
        assert np.abs(st_.tau[mid]).max() <= 1e-3 * st_.p_p[mid].max()


def test_equilibrium_total_force_is_zero(grid):
    # spring force and thermal force balance pointwise at rest
    f = equilibrium_field(grid)
    N = marginal_density(f)
    fs = cell_spring_force(f)
    ft = thermal_force(N, grid.dy, P.kBT)
    interior = slice(2, -2)
    assert np.abs((fs + ft)[interior]).max() <= 5e-2 * np.abs(fs).max()


def test_wall_stress_ratio_shrinks_with_resolution():
    r = [wall_stress_ratio(equilibrium_field(KineticGrid(Channel(2.0), Hookean(), P, ny=n, nq=12)))
         for n in (8, 16)]
    assert r[1] < r[0]


def test_wall_stress_ratio_needs_channel():
    g = KineticGrid(PeriodicBox(4.0), Hookean(), P, ny=8, nq=8)
    with pytest.raises(ValueError):
        wall_stress_ratio(equilibrium_field(g))


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(0.05, 1.0))
def test_wall_extrapolate_exact_for_quadratics(a, b, c, h):
    y = (np.arange(6) + 0.5) * h
    v = a + b * y + c * y**2
    lo, hi = wall_extrapolate(v)
    top = 6 * h
    assert lo == pytest.approx(a, abs=1e-10)
    assert hi == pytest.approx(a + b * top + c * top**2, abs=1e-9)


def test_wall_extrapolate_needs_three_cells():
    with pytest.raises(ValueError):
        wall_extrapolate(np.ones(2))


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_derivative_exact_for_quadratics(a, b, c):
    y = np.linspace(0, 1, 9)
    d = derivative_y(a + b * y + c * y**2, y[1] - y[0])
    np.testing.assert_allclose(d, b + 2 * c * y, atol=1e-10)


@given(st.floats(0.1, 5.0))
def test_thermal_force_of_uniform_density_is_zero(N0):
    np.testing.assert_allclose(thermal_force(np.full(7, N0), 0.3, 1.0), 0.0, atol=1e-14 * N0)


def test_solution_and_solvent_forces_agree_without_volume(grid):
    f = random_field(grid, 11)
    N = marginal_density(f)
    a = total_polymer_force(stress_wall_aware(f, mode="solvent"), N, "solvent", dy=grid.dy)
    b = total_polymer_force(stress_wall_aware(f, mode="solution"), N, "solution", dy=grid.dy)
    np.testing.assert_allclose(a.f, b.f, atol=1e-12 * np.abs(a.f).max())
    with pytest.raises(ValueError):
        total_polymer_force(stress_wall_aware(f), N, "bogus", dy=grid.dy)


def test_solution_force_scales_with_free_volume(grid):
    f = random_field(grid, 12)
    N = marginal_density(f)
    st_ = stress_wall_aware(f, mode="solution")
    phi = np.full_like(N, 0.2)
    a = total_polymer_force(st_, N, "solution", dy=grid.dy)
    b = total_polymer_force(st_, N, "solution", phi_profile=phi, dy=grid.dy)
    np.testing.assert_allclose(b.f, a.f / 0.8, rtol=1e-14)


@pytest.mark.parametrize("method", ["segment", "gauss"])
def test_weak_identity_on_steady_shear_field(method):
    g = KineticGrid(Channel(4.0), Hookean(), P, ny=16, nq=16)
    field = fp_steady(equilibrium_field(g), ShearFlow(0.5), P, tol=1e-9).field
    rng = np.random.default_rng(0)
    r = weak_identity_residual(field, g=smooth_test_function(rng, 4.0, 0.3), method=method)
    assert r <= (1e-12 if method == "segment" else 1e-3)


def test_weak_identity_requires_test_function(grid):
    with pytest.raises(ValueError):
        weak_identity_residual(equilibrium_field(grid))


def test_direct_force_vanishes_in_uniform_box():
    g = KineticGrid(PeriodicBox(4.0), Hookean(), P, ny=8, nq=10)
    assert np.abs(direct_spring_force(equilibrium_field(g))).max() <= 1e-12


def test_taylor_zero_matches_homogeneous_in_uniform_box():
    g = KineticGrid(PeriodicBox(4.0), Hookean(), P, ny=8, nq=12)
    f = fp_steady(equilibrium_field(g), ShearFlow(0.7), P, tol=1e-10).field
    h = stress_homogeneous(f)
    for order in (0, 2):
        t = stress_taylor(f, order)
        np.testing.assert_allclose(t.tau, h.tau, atol=1e-10)
    with pytest.raises(ValueError):
        stress_taylor(f, 1)


def test_fourier_stress_matches_homogeneous_in_uniform_box():
    g = KineticGrid(PeriodicBox(4.0), Hookean(), P, ny=8, nq=12)
    f = fp_steady(equilibrium_field(g), ShearFlow(0.7), P, tol=1e-10).field
    np.testing.assert_allclose(spring_stress(f, method="fourier"), stress_homogeneous(f).tau_spring, atol=1e-10)
    with pytest.raises(ValueError):
        spring_stress(f, method="segment")


def test_fourier_needs_periodic_box(grid):
    with pytest.raises(ValueError):
        spring_stress(equilibrium_field(grid), method="fourier")
    with pytest.raises(ValueError):
        spring_stress(equilibrium_field(grid), method="nope")


def test_stress_csv_has_units_header(grid, tmp_path):
    path = tmp_path / "stress.csv"
    write_stress_csv(path, stress_wall_aware(equilibrium_field(grid)))
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# units:")
    assert lines[1] == "y,tau_xx,tau_xy,tau_yy,p_p,N"
    assert len(lines) == 2 + grid.ny
