import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dumbbellflow.core import FENE, DomainError, Channel, FreeSpace, Hookean, PeriodicBox, PhysicalParams
from dumbbellflow.flows import KolmogorovFlow, PoiseuilleFlow, ZeroFlow
from dumbbellflow.langevin import (Bins, EnsembleInertial, ProfileAccumulator, estimate_profiles,
                                   estimate_spring_stress, fourier_projection, initial_inertial_ensemble,
                                   kinetic_temperature, momentum_residual, spring_line_deposit, step_inertial,
                                   write_snapshot_csv)

P = PhysicalParams(mass=0.04)


@settings(max_examples=15)
@given(st.integers(0, 2**31), st.sampled_from(["baoab", "em"]))
def test_reflections_keep_beads_in_channel(seed, scheme):
    geom = Channel(2.0)
    ens = initial_inertial_ensemble(500, Hookean(), P, geom, seed=seed)
    for _ in range(20):
        ens = step_inertial(ens, 0.01, ZeroFlow(), P, Hookean(), geom, scheme=scheme)
    for r in (ens.r1, ens.r2):
        assert np.all((r[:, 1] >= 0) & (r[:, 1] <= 2.0))
    assert ens.reflections > 0


def test_same_seed_same_trajectory():
    geom = Channel(3.0)
    runs = []
    for _ in range(2):
        ens = initial_inertial_ensemble(200, Hookean(), P, geom, seed=5)
        for _ in range(10):
            ens = step_inertial(ens, 0.005, PoiseuilleFlow(3.0, 1.0), P, Hookean(), geom)
        runs.append(ens)
    np.testing.assert_array_equal(runs[0].r1, runs[1].r1)
    np.testing.assert_array_equal(runs[0].V2, runs[1].V2)
    other = initial_inertial_ensemble(200, Hookean(), P, geom, seed=6)
    assert not np.array_equal(other.r1, runs[0].r1)


def test_noise_depends_on_particle_id_not_ensemble_order():
    geom = FreeSpace()
    ens = initial_inertial_ensemble(50, Hookean(), P, geom, seed=3)
    full = step_inertial(ens, 0.01, ZeroFlow(), P, Hookean(), geom)
    sub = ens.replace(r1=ens.r1[10:20], r2=ens.r2[10:20], V1=ens.V1[10:20], V2=ens.V2[10:20], ids=ens.ids[10:20])
    part = step_inertial(sub, 0.01, ZeroFlow(), P, Hookean(), geom)
    np.testing.assert_array_equal(part.V1, full.V1[10:20])


def test_centre_of_mass_velocity_decays_at_friction_rate():
    # spring forces cancel in V1 + V2, so the mean obeys dV/dt = -V / lambda_B exactly
    geom = FreeSpace()
    n = 20_000
    ens = initial_inertial_ensemble(n, Hookean(), P, geom, seed=9)
    ens = ens.replace(V1=ens.V1 + [1.0, 0.0], V2=ens.V2 + [1.0, 0.0])
    dt, steps = 0.002, 20
    for _ in range(steps):
        ens = step_inertial(ens, dt, ZeroFlow(), P, Hookean(), geom)
    vcm = 0.5 * (ens.V1[:, 0] + ens.V2[:, 0])
    expected = math.exp(-steps * dt / P.lambda_B)
    se = vcm.std(ddof=1) / math.sqrt(n)
    assert abs(vcm.mean() - expected) <= 5 * se


def test_initial_velocities_are_thermal():
    ens = initial_inertial_ensemble(40_000, Hookean(), P, FreeSpace(), seed=1)
    assert kinetic_temperature(ens, P) == pytest.approx(P.kBT, rel=0.02)


def _stretched_pair(law, speed):
    r1 = np.array([[-0.48 * law.q0, 0.0]])
    r2 = -r1
    V = np.array([[speed, 0.0]])
    return EnsembleInertial(r1, r2, -V, V.copy(), seed=1)


def test_fene_overextension_is_retried():
    # heavy beads moving apart fast enough that one full step overshoots q0
    law, p = FENE(1.0, 1.5), PhysicalParams(mass=1.0)
    ens = _stretched_pair(law, 3.0)
    dt = 0.1
    with pytest.raises(DomainError):
        step_inertial(ens, dt, ZeroFlow(), p, law, FreeSpace(), max_retries=0)
    out = step_inertial(ens, dt, ZeroFlow(), p, law, FreeSpace())
    assert np.sum(out.q**2) < law.q0**2


@pytest.mark.parametrize("kw", [{"dt": 0.0}, {"mode": "mixed"}, {"scheme": "rk4"}])
def test_step_rejects_bad_arguments(kw):
    ens = initial_inertial_ensemble(10, Hookean(), P, FreeSpace())
    args = {"dt": 0.01, **kw}
    dt = args.pop("dt")
    with pytest.raises(ValueError):
        step_inertial(ens, dt, ZeroFlow(), P, Hookean(), FreeSpace(), **args)


def test_direct_and_friction_forces_coincide():
    geom = Channel(4.0)
    flow = PoiseuilleFlow(4.0, 1.5)
    ens = initial_inertial_ensemble(5000, Hookean(), P, geom, seed=4, v_field=flow)
    for _ in range(5):
        ens = step_inertial(ens, 0.005, flow, P, Hookean(), geom)
    prof = estimate_profiles(ens, Bins.for_geometry(geom, 16), flow, P, Hookean())
    ok = ~prof.empty
    np.testing.assert_allclose(prof.f_direct[ok], prof.f_friction[ok], rtol=1e-10,
                               atol=1e-12 * np.abs(prof.f_direct[ok]).max())
    # each bead counts one half, so the bins hold one unit per dumbbell
    assert prof.N.sum() * prof.bins.volume == pytest.approx(ens.n)


@given(st.integers(0, 2**31), st.booleans())
def test_line_deposit_conserves_total_qF(seed, periodic):
    geom = PeriodicBox(3.0) if periodic else Channel(3.0)
    ens = initial_inertial_ensemble(300, Hookean(), P, geom, seed=seed)
    if periodic:
        shift = np.random.default_rng(seed).uniform(-10, 10, size=(ens.n, 1)) * [0.0, 1.0]
        ens = ens.replace(r1=ens.r1 + shift, r2=ens.r2 + shift)
    bins = Bins.for_geometry(geom, 7)
    dep = spring_line_deposit(ens, bins, Hookean())[0].sum(0)
    q = ens.q
    np.testing.assert_allclose(dep, q.T @ (Hookean().H * q), rtol=1e-10)
    np.testing.assert_allclose(estimate_spring_stress(ens, bins, Hookean()).sum(0) * bins.volume, dep, rtol=1e-12)


def test_bins_index_and_wrap():
    b = Bins.uniform(2.0, 4)
    np.testing.assert_array_equal(b.index([0.0, 0.49, 0.5, 1.99, 2.0, -1.0]), [0, 0, 1, 3, 3, 0])
    pb = Bins.uniform(2.0, 4, periodic=True)
    np.testing.assert_array_equal(pb.index([-0.25, 2.25, 4.6]), [3, 0, 1])
    assert b.width == 0.5 and b.volume == 0.5
    with pytest.raises(ValueError):
        Bins.for_geometry(FreeSpace())


@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(1, 3))
def test_fourier_projection_recovers_amplitudes(a, b, mode):
    n, L = 32, 2.5
    y = (np.arange(n) + 0.5) * L / n
    f = a * np.cos(2 * np.pi * mode * y / L) + b * np.sin(2 * np.pi * mode * y / L) + 0.7
    c, s = fourier_projection(f, L, mode)
    assert c == pytest.approx(a, abs=1e-12) and s == pytest.approx(b, abs=1e-12)


def test_momentum_residual_shapes_and_validation():
    geom = PeriodicBox(4.0)
    flow = KolmogorovFlow(0.5, 4.0)
    ens = initial_inertial_ensemble(4000, Hookean(), P, geom, seed=0, v_field=flow)
    bins = Bins.for_geometry(geom, 8)
    windows, times = [], []
    for w in range(3):
        acc = ProfileAccumulator(bins, P.zeta, 2, n_batches=4)
        for _ in range(3):
            ens = step_inertial(ens, 0.005, flow, P, Hookean(), geom)
            acc.add(ens, flow, P, Hookean())
        windows.append(acc)
        times.append(ens.t)
    for form in ("conservative", "literal"):
        res = momentum_residual(windows, P, times, form)
        assert res.residual.shape == (8, 2)
        assert res.batches.shape == (4, 8, 2)
        assert np.all(np.isfinite(res.stderr))
        assert set(res.terms) == {"inertia", "friction", "div_tau_s", "variance"}
    with pytest.raises(ValueError):
        momentum_residual([], P)
    with pytest.raises(ValueError):
        momentum_residual(windows, P, times, "other")


def test_snapshot_csv_layout(tmp_path):
    ens = initial_inertial_ensemble(5, Hookean(), P, Channel(2.0))
    path = tmp_path / "snap.csv"
    write_snapshot_csv(path, ens)
    write_snapshot_csv(path, ens, append=True)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# units:")
    assert lines[1].split(",")[:3] == ["t", "particle_id", "r1_x"]
    assert len(lines) == 2 + 10


def test_empty_ensemble_has_no_profile():
    e = EnsembleInertial(*(np.zeros((0, 2)) for _ in range(4)))
    with pytest.raises(ValueError):
        estimate_profiles(e, Bins.uniform(1.0, 2), ZeroFlow(), P)
