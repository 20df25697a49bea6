"""Acceptance battery: one function per criterion, each returning a :class:`CriterionResult`.

Every check runs at desk scale. ``quick=True`` shrinks ensembles and grids
for smoke runs; the thresholds stay the same, so quick runs may fail where
the statistics are too thin.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .core import FENE, Channel, FreeSpace, Hookean, PeriodicBox, PhysicalParams
from .flows import KolmogorovFlow, PoiseuilleFlow, ShearFlow, ZeroFlow
from .inertialess import (EnsembleInertialess, FokkerPlanckOperator, KineticGrid, equilibrium_field,
                          fp_steady, gaussian_field, initial_inertialess_ensemble, marginal_density,
                          second_moments, step_inertialess_sde, total_mass)
from .langevin import (Bins, ProfileAccumulator, initial_inertial_ensemble, kinetic_temperature,
                       momentum_residual, step_inertial)
from .oracle import constitutive_ode, convergence_order, inertialess_dumbbell_covariance, shear_gradient
from .stress import stress_homogeneous


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    summary: str
    values: dict = dc_field(default_factory=dict)
    runtime_s: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.number:2d} {self.name}: {self.summary} ({self.runtime_s:.1f} s)"


def _batch_stderr(samples: np.ndarray, n_batches: int = 16) -> np.ndarray:
    """Batch-means standard error of a time series along axis 0."""
    m = len(samples) // n_batches * n_batches
    means = samples[:m].reshape((n_batches, -1) + samples.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / math.sqrt(n_batches)


# ------------------------------------------------------------ 1


def equipartition(quick: bool = False, seed: int = 11) -> dict:
    """Kinetic temperature of an equilibrium inertial ensemble."""
    p = PhysicalParams(mass=0.04)
    law, geom = Hookean(), Channel(10.0)
    n = 2_000 if quick else 10_000
    lam_B = p.mass / p.zeta
    dt = 0.1 * lam_B
    ens = initial_inertial_ensemble(n, law, p, geom, seed=seed)
    zero = ZeroFlow()
    # velocities decorrelate over lambda_B; sample every 5 lambda_B
    gap = int(round(5 * lam_B / dt))
    n_samples = 20
    for _ in range(10 * gap):
        ens = step_inertial(ens, dt, zero, p, law, geom)
    temps = []
    for _ in range(n_samples):
        for _ in range(gap):
            ens = step_inertial(ens, dt, zero, p, law, geom)
        temps.append(kinetic_temperature(ens, p))
    effective = 2 * n * n_samples
    return {"kinetic_temperature": float(np.mean(temps)), "kBT": p.kBT, "effective_samples": effective,
            "inside": bool(np.all((ens.r1[:, 1] >= 0) & (ens.r1[:, 1] <= geom.gap)
                                  & (ens.r2[:, 1] >= 0) & (ens.r2[:, 1] <= geom.gap)))}


def criterion_1(quick: bool = False) -> CriterionResult:
    v = equipartition(quick)
    rel = abs(v["kinetic_temperature"] / v["kBT"] - 1)
    ok = rel <= 0.02 and v["effective_samples"] >= (1e4 if quick else 1e5) and v["inside"]
    return CriterionResult(1, "equipartition", ok,
                           f"m|V|^2/d = {v['kinetic_temperature']:.4f} (rel. dev. {rel:.2e} <= 2e-2), "
                           f"{v['effective_samples']:.0f} samples", v)


# ------------------------------------------------------------ 2


def equilibrium_moments_check(quick: bool = False, seed: int = 5) -> dict:
    p = PhysicalParams()
    law = Hookean()
    # grid: relax a wrong Gaussian to equilibrium in free space
    g = KineticGrid(FreeSpace(), law, p, nq=32 if quick else 64)
    start = gaussian_field(g, np.diag([2.0, 0.5]))
    res = fp_steady(start, ZeroFlow(), p, tol=1e-9)
    M = second_moments(res.field)[0]
    tau = stress_homogeneous(res.field).tau[0]
    N = total_mass(res.field)
    grid_err = float(np.max(np.abs(M - np.eye(2))))
    stress_ratio = float(np.linalg.norm(tau) / (N * p.kBT))
    # SDE: periodic box, time average with batch-means errors
    n = 2_000 if quick else 10_000
    box = PeriodicBox(10.0)
    ens = initial_inertialess_ensemble(n, law, p, box, seed=seed)
    ens = EnsembleInertialess(ens.x, 2.0 * ens.q, seed=seed)
    # Euler-Maruyama inflates the stationary variance by a relative dt * 2H / (2 zeta)
    dt = 0.002
    for _ in range(2500):
        ens = step_inertialess_sde(ens, dt, ZeroFlow(), p, law, box)
    samples = []
    for _ in range(200 if quick else 400):
        for _ in range(50):
            ens = step_inertialess_sde(ens, dt, ZeroFlow(), p, law, box)
        samples.append(ens.q.T @ ens.q / n)
    samples = np.array(samples)
    mean = samples.mean(0)
    se = _batch_stderr(samples)
    z = np.abs(mean - np.eye(2)) / se
    return {"grid_moments": M, "grid_max_dev": grid_err, "grid_stress_ratio": stress_ratio,
            "grid_steps": res.steps, "sde_moments": mean, "sde_stderr": se, "sde_z": z}


def criterion_2(quick: bool = False) -> CriterionResult:
    v = equilibrium_moments_check(quick)
    zmax = float(v["sde_z"].max())
    ok = v["grid_max_dev"] <= 0.01 and v["grid_stress_ratio"] <= 1e-3 and zmax <= 3.0
    return CriterionResult(2, "equilibrium moments", ok,
                           f"grid max|<qq>-I| = {v['grid_max_dev']:.2e} (<= 1e-2), "
                           f"|tau|/NkT = {v['grid_stress_ratio']:.2e} (<= 1e-3), SDE max z = {zmax:.2f} (<= 3)", v)


# ------------------------------------------------------------ 4


def homogeneous_rheology(quick: bool = False) -> dict:
    """Steady-shear stress from the grid solver against the closed moment equations."""
    p = PhysicalParams()
    nq = 32 if quick else 64
    out = {}
    cases = [("OldroydB", Hookean(), None, None), ("FENE_P", FENE(q0=20.0), 8.0, 400.0)]
    for model, law, q_half, b in cases:
        g = KineticGrid(FreeSpace(), law, p, nq=nq, q_half=q_half)
        eq = equilibrium_field(g)
        for De in (0.1, 0.5, 1.0):
            op = FokkerPlanckOperator(g, p, ShearFlow(De))
            psi, _ = op.steady_state(eq.psi)
            tau = stress_homogeneous(eq.copy(psi=psi)).tau[0]
            _, ref = constitutive_ode(De, 1.0, model, t_final=40.0, b=b)
            out[(model, De)] = {"tau": tau, "reference": ref,
                                "rel_error": float(np.linalg.norm(tau - ref) / np.linalg.norm(ref))}
    return out


def criterion_4(quick: bool = False) -> CriterionResult:
    v = homogeneous_rheology(quick)
    ob = max(r["rel_error"] for (m, _), r in v.items() if m == "OldroydB")
    fp = max(r["rel_error"] for (m, _), r in v.items() if m == "FENE_P")
    ok = ob <= 0.02 and fp <= 0.04
    return CriterionResult(4, "homogeneous rheology", ok,
                           f"max rel. error Oldroyd-B {ob:.2e} (<= 2e-2), FENE vs FENE-P {fp:.2e} (<= 4e-2)",
                           {f"{m}@De={De}": r["rel_error"] for (m, De), r in v.items()})


# ------------------------------------------------------------ 3


def epsilon_ladder(quick: bool = False, eps_values=(0.4, 0.2, 0.1, 0.05), gammadot: float = 1.0,
                   dt_ratio: float = 0.05, seed: int = 3) -> dict:
    """Inertial against inertialess ``<qq>`` in steady homogeneous shear.

    Both ensembles start from the same configurations and consume the same
    per-bead normals with the same time step ``dt = dt_ratio * lambda_B``
    (common random numbers), so the Monte Carlo noise largely cancels in their
    difference. ``m = 4 eps^2`` makes ``lambda_B / lambda_H = eps^2`` for
    ``zeta = 4, H = 1``. The splitting integrator carries a bias of order
    ``dt_ratio^2`` that does not shrink with ``eps``; ``dt_ratio`` bounds it.
    """
    from .inertialess import initial_inertialess_ensemble as _init
    from .langevin import EnsembleInertial
    from .oracle import inertial_dumbbell_covariance

    law, geom, flow = Hookean(), FreeSpace(), ShearFlow(gammadot)
    n = 500 if quick else 2_000
    t_burn, t_avg = (1.0, 4.0) if quick else (1.0, 10.0)
    kappa = shear_gradient(gammadot)
    p0 = PhysicalParams()
    ref = inertialess_dumbbell_covariance(p0, law, kappa)
    rng = np.random.default_rng(seed)
    # start from the stationary inertialess connector law
    q0 = rng.multivariate_normal(np.zeros(2), ref, size=n)
    x0 = _init(n, law, p0, geom, seed=seed).x
    rows = []
    for eps in eps_values:
        p = PhysicalParams(mass=4 * eps**2)
        dt = dt_ratio * p.mass / p.zeta
        sd = math.sqrt(p.kBT / p.mass)
        r1, r2 = x0 - 0.5 * q0, x0 + 0.5 * q0
        V1 = flow(r1) + sd * rng.standard_normal(r1.shape)
        V2 = flow(r2) + sd * rng.standard_normal(r2.shape)
        ens = EnsembleInertial(r1, r2, V1, V2, seed=seed)
        sde = EnsembleInertialess(x0.copy(), q0.copy(), seed=seed)
        n_burn, n_avg = int(round(t_burn / dt)), int(round(t_avg / dt))
        every = max(1, int(round(0.05 / dt)))
        diffs = []
        for s in range(n_burn + n_avg):
            xi = ens.rng.normals(ens.step, ens.ids, 4).reshape(n, 2, 2)
            ens = step_inertial(ens, dt, flow, p, law, geom)
            sde = step_inertialess_sde(sde, dt, flow, p, law, geom, noise=xi)
            if s >= n_burn and (s - n_burn) % every == 0:
                diffs.append((ens.q.T @ ens.q - sde.q.T @ sde.q) / n)
        diffs = np.array(diffs)
        mean = diffs.mean(0)
        exact = inertial_dumbbell_covariance(p, law, kappa)["qq"] - ref
        rows.append({"eps": eps, "dt": dt, "mean_difference": mean, "stderr": _batch_stderr(diffs),
                     "error": float(np.linalg.norm(mean)), "exact_error": float(np.linalg.norm(exact))})
    errors = [r["error"] for r in rows]
    fit = convergence_order(errors, list(eps_values)) if all(e > 0 for e in errors) else None
    return {"rows": rows, "errors": errors, "order": fit.slope if fit else float("nan"),
            "order_ci": (fit.ci_low, fit.ci_high) if fit else None}


def criterion_3(quick: bool = False) -> CriterionResult:
    v = epsilon_ladder(quick)
    e = v["errors"]
    decreasing = all(b < a for a, b in zip(e, e[1:]))
    ok = decreasing and v["order"] >= 0.8
    return CriterionResult(3, "inertialess limit", ok,
                           "errors " + ", ".join(f"{x:.2e}" for x in e)
                           + f" (strictly decreasing: {decreasing}), fitted order {v['order']:.2f} (>= 0.8)", v)


# ------------------------------------------------------------ 5


def smooth_test_function(rng: np.random.Generator, length: float, margin: float, modes: int = 4):
    """Random smooth vector field on ``(margin, length - margin)``, zero outside.

    Returns a callable ``y -> (g, g')`` with arrays of shape ``(n, 2)``.
    """
    a = rng.normal(size=(2, modes))
    phase = rng.uniform(0, 2 * np.pi, size=(2, modes))
    k = np.arange(1, modes + 1) * np.pi / length
    lo, hi = margin, length - margin

    def g(y):
        y = np.asarray(y, dtype=float)
        s = np.clip((y - lo) / (hi - lo), 0.0, 1.0)
        inside = (s > 0) & (s < 1)
        ss = np.where(inside, s * (1 - s), 1.0)
        bump = np.where(inside, np.exp(4.0 - 1.0 / ss), 0.0)
        dbump = np.where(inside, bump * (1 - 2 * s) / ss**2 / (hi - lo), 0.0)
        arg = k[None, None, :] * y[:, None, None] + phase[None]
        f = (a[None] * np.sin(arg)).sum(-1)
        df = (a[None] * k * np.cos(arg)).sum(-1)
        return bump[:, None] * f, dbump[:, None] * f + bump[:, None] * df

    return g


def _channel_steady_field(gap: float, ny: int, nq: int, rate: float, law=None):
    """Steady kinetic field in an imposed Poiseuille flow with wall shear rate ``rate``."""
    p = PhysicalParams()
    law = Hookean() if law is None else law
    grid = KineticGrid(Channel(gap), law, p, ny=ny, nq=nq)
    eq = equilibrium_field(grid)
    op = FokkerPlanckOperator(grid, p, PoiseuilleFlow(gap, rate * gap / 4))
    psi, _ = op.steady_state(eq.psi)
    return eq.copy(psi=psi)


def weak_identity_check(quick: bool = False, n_functions: int = 10, seed: int = 0) -> dict:
    from .stress import weak_identity_residual

    field = _channel_steady_field(10.0, 16 if quick else 32, 16 if quick else 32, 1.0)
    L = field.grid.length
    out = {}
    for method in ("gauss", "segment", "cell"):
        rng = np.random.default_rng(seed)
        out[method] = [weak_identity_residual(field, g=smooth_test_function(rng, L, 0.05 * L), method=method)
                       for _ in range(n_functions)]
    return out


def criterion_5(quick: bool = False) -> CriterionResult:
    v = weak_identity_check(quick)
    worst = {m: max(r) for m, r in v.items()}
    ok = worst["gauss"] <= 1e-3
    return CriterionResult(5, "weak identity", ok,
                           f"max residual over 10 test fields: Gauss {worst['gauss']:.1e} (<= 1e-3); "
                           f"exact s-integrals: segment {worst['segment']:.1e}, cell {worst['cell']:.1e}", worst)


# ------------------------------------------------------------ 8


def force_identities(quick: bool = False, seed: int = 4) -> dict:
    """Estimator identity on a particle ensemble and the stress/force identity on a kinetic field."""
    from .langevin import estimate_profiles
    from .stress import (cell_spring_force, face_divergence, face_positions, spring_stress,
                         stress_wall_aware, thermal_force, total_polymer_force)
    from .transport import polymer_velocity

    p = PhysicalParams(mass=0.04)
    law, geom = Hookean(), Channel(10.0)
    flow = PoiseuilleFlow(10.0, 2.0)
    n = 5_000 if quick else 50_000
    ens = initial_inertial_ensemble(n, law, p, geom, seed=seed, v_field=flow)
    for _ in range(200):
        ens = step_inertial(ens, 0.001, flow, p, law, geom)
    prof = estimate_profiles(ens, Bins.for_geometry(geom, 32), flow, p, law)
    ok = ~prof.empty
    scale = np.nanmax(np.abs(prof.f_direct[ok]))
    estimator_gap = float(np.nanmax(np.abs(prof.f_direct[ok] - prof.f_friction[ok])) / scale)

    field = _channel_steady_field(10.0, 32, 32, 1.0)
    g = field.grid
    N = marginal_density(field)
    fs_pair = cell_spring_force(field)
    ft = thermal_force(N, g.dy, p.kBT)
    f_direct = fs_pair + ft
    faces = {m: spring_stress(field, face_positions(g), method=m) for m in ("cell", "segment", "gauss")}
    ref = np.abs(fs_pair).max()
    residual = {}
    for m, tf in faces.items():
        st = stress_wall_aware(field, method="cell" if m == "cell" else m)
        dec = total_polymer_force(st, N, "solvent", dy=g.dy, spring_divergence=face_divergence(tf, g.dy))
        residual[m] = float(np.abs(dec.f - f_direct).max() / ref)
    # the transport layer recovers f from v_p: 2 N zeta (v_p - v_s) = f
    vs = flow(np.stack([np.zeros_like(g.y), g.y], -1))
    st = stress_wall_aware(field, method="cell")
    pv = polymer_velocity(vs, st, N, p, dy=g.dy, spring_divergence=face_divergence(faces["cell"], g.dy))
    recovered = 2 * N[:, None] * p.zeta * (pv.vp - vs)
    velocity_gap = float(np.abs(recovered - pv.force).max() / max(np.abs(pv.force).max(), 1e-300))
    return {"estimator_gap": estimator_gap, "stress_force_residual": residual, "velocity_gap": velocity_gap}


def criterion_8(quick: bool = False) -> CriterionResult:
    v = force_identities(quick)
    r = v["stress_force_residual"]
    ok = v["estimator_gap"] <= 1e-12 and v["velocity_gap"] <= 1e-12 and r["cell"] <= 1e-3
    return CriterionResult(8, "force identities", ok,
                           f"|f_direct - 2N zeta (v_p - v_s)| rel. {v['estimator_gap']:.1e} (particles), "
                           f"{v['velocity_gap']:.1e} (profiles); |f - (div tau - grad p_p)| rel. "
                           f"{r['cell']:.1e} (<= 1e-3; segment {r['segment']:.1e}, 8-node Gauss {r['gauss']:.1e})", v)


# ------------------------------------------------------------ 9


def momentum_balance(quick: bool = False, sizes=(1_000, 10_000, 100_000), seed: int = 2) -> dict:
    """Polymer momentum residual of an inertial ensemble in steady Kolmogorov flow."""
    from .langevin import fourier_projection

    eps = 0.2
    p = PhysicalParams(mass=4 * eps**2)
    law = Hookean()
    L = 10.0
    box = PeriodicBox(L)
    flow = KolmogorovFlow(1.0, L)
    dt = 0.1 * p.mass / p.zeta
    if quick:
        sizes = tuple(s // 10 for s in sizes)
    rows = []
    for n in sizes:
        ens = initial_inertial_ensemble(n, law, p, box, seed=seed, v_field=flow)
        for _ in range(int(round(3.0 / dt))):
            ens = step_inertial(ens, dt, flow, p, law, box, scheme="em")
        bins = Bins.for_geometry(box, 16)
        windows, times = [], []
        for _ in range(3):
            acc = ProfileAccumulator(bins, p.zeta, 2, 16)
            t0 = ens.t
            for _ in range(40):
                for _ in range(5):
                    ens = step_inertial(ens, dt, flow, p, law, box, scheme="em")
                acc.add(ens, flow, p, law)
            windows.append(acc)
            times.append(0.5 * (t0 + ens.t))
        N0 = n / L
        row = {"n": n}
        for form in ("conservative", "literal"):
            res = momentum_residual(windows, p, times, form=form)
            c, s = fourier_projection(res.residual, L)
            cb, sb = zip(*(fourier_projection(b, L) for b in res.batches))
            proj = np.concatenate([c, s])
            proj_se = np.concatenate([np.std(cb, axis=0, ddof=1), np.std(sb, axis=0, ddof=1)]) / math.sqrt(len(cb))
            row[form] = {"mode_z": proj / proj_se,
                         "relative_rms": float(np.sqrt(np.nanmean(res.residual**2)) / N0),
                         "bin_z_rms": float(np.sqrt(np.nanmean((res.residual / res.stderr) ** 2)))}
        rows.append(row)
    slopes = {}
    for form in ("conservative", "literal"):
        y = np.log([r[form]["relative_rms"] for r in rows])
        slopes[form] = float(np.polyfit(np.log(sizes), y, 1)[0])
    return {"rows": rows, "slopes": slopes, "sizes": sizes}


def criterion_9(quick: bool = False) -> CriterionResult:
    v = momentum_balance(quick)
    zmax = {f: max(float(np.max(np.abs(r[f]["mode_z"]))) for r in v["rows"]) for f in ("conservative", "literal")}
    ok = all(zmax[f] <= 3.0 for f in zmax) and all(-0.7 <= v["slopes"][f] <= -0.3 for f in zmax)
    return CriterionResult(9, "momentum balance", ok,
                           f"forcing-mode |z| max {zmax['conservative']:.2f} / {zmax['literal']:.2f} (<= 3), "
                           f"residual ~ N_p^{v['slopes']['conservative']:.2f} / N_p^{v['slopes']['literal']:.2f} "
                           "(conservative / literal; -0.5 expected)", v)


# ------------------------------------------------------------ 10


def taylor_order(quick: bool = False, lengths=(8.0, 16.0, 32.0, 64.0)) -> dict:
    """Truncated stress against the exact s-integral on a manufactured periodic field."""
    from .inertialess import KineticField
    from .stress import spring_stress, stress_taylor

    p = PhysicalParams()
    e0, e2 = [], []
    for L in lengths:
        g = KineticGrid(PeriodicBox(L), Hookean(), p, ny=32, nq=32 if quick else 48)
        Y = g.y[:, None, None]
        base = np.exp(-0.5 * (g.QX**2 + 0.7 * g.QY**2 + 0.4 * g.QX * g.QY))[None]
        psi = base * (1 + 0.3 * np.cos(2 * np.pi * Y / L) + 0.2 * np.sin(4 * np.pi * Y / L + 0.3))
        field = KineticField(g, np.where(g.mask, psi, 0.0))
        exact = spring_stress(field, method="fourier")
        scale = np.abs(exact).max()
        e0.append(float(np.abs(stress_taylor(field, 0).tau_spring - exact).max() / scale))
        e2.append(float(np.abs(stress_taylor(field, 2).tau_spring - exact).max() / scale))
    ratio = [1.0 / L for L in lengths]
    return {"ell_over_L": ratio, "error_order0": e0, "error_order2": e2,
            "order0": convergence_order(e0, ratio).slope, "order2": convergence_order(e2, ratio).slope}


def criterion_10(quick: bool = False) -> CriterionResult:
    v = taylor_order(quick)
    ok = abs(v["order2"] - 4) <= 0.5 and abs(v["order0"] - 2) <= 0.5
    return CriterionResult(10, "Taylor-stress order", ok,
                           f"fitted order {v['order2']:.2f} for the 2-term form (4 +- 0.5), "
                           f"{v['order0']:.2f} for the 0-term form (2 +- 0.5)", v)


# ------------------------------------------------------------ coupled runs


def _coupled(gap=10.0, ny=16, nq=16, pressure_gradient=0.8, params=None, law=None, tol=1e-7, **kw):
    from .transport import CoupledConfig, Forcing, coupled_solve

    cfg = CoupledConfig(gap=gap, params=params or PhysicalParams(), law=law or Hookean(),
                        forcing=Forcing(pressure_gradient=pressure_gradient), ny=ny, nq=nq,
                        t_final=kw.pop("t_final", 4000.0), macro_dt=kw.pop("macro_dt", 20.0), tol=tol,
                        kinetic_stepping=kw.pop("kinetic_stepping", "implicit"), **kw)
    return coupled_solve(cfg)


# ------------------------------------------------------------ 6


def wall_stress_check(quick: bool = False, resolutions=(16, 32, 64)) -> dict:
    """Extrapolated wall stress of converged coupled runs in a gap of two spring lengths."""
    from .stress import wall_stress_ratio

    if quick:
        resolutions = resolutions[:2]
    ratios, converged = [], []
    for ny in resolutions:
        # wall shear rate 2 / lambda_H, centreline speed ~ l0 / lambda_H
        r = _coupled(gap=2.0, ny=ny, nq=16, pressure_gradient=2.0, t_final=400.0)
        ratios.append(wall_stress_ratio(r.field))
        converged.append(r.converged)
    return {"ny": list(resolutions), "ratio": ratios, "converged": converged}


def criterion_6(quick: bool = False) -> CriterionResult:
    v = wall_stress_check(quick)
    r = v["ratio"]
    decreasing = all(b < a for a, b in zip(r, r[1:]))
    ok = decreasing and all(v["converged"]) and (quick or r[v["ny"].index(64)] <= 0.05)
    listed = ", ".join(f"{n}: {x:.4f}" for n, x in zip(v["ny"], r))
    return CriterionResult(6, "wall stress", ok,
                           f"|tau_wall + N kBT delta| / (N kBT) by y-cells {listed} (<= 0.05 at 64, decreasing)", v)


# ------------------------------------------------------------ 7


def conservation_check(quick: bool = False) -> dict:
    from .transport import mixture_divergence

    steps = 1_000 if quick else 10_000
    run = _coupled(gap=10.0, ny=16, nq=16, t_final=steps * 0.05, macro_dt=0.05, tol=0.0,
                   kinetic_stepping="explicit", profile_every=0)
    drift = max(h["mass_drift"] for h in run.history)
    steady = _coupled(gap=10.0, ny=16, nq=16, tol=1e-9)
    p = PhysicalParams()
    pr = steady.profile
    div_u = mixture_divergence(pr, 10.0 / 16)
    # u_y = 0 fixes v_sy = -V_d f_y / 2 zeta; its divergence must match the constraint target
    target = -p.V_d / (2 * p.zeta) * np.gradient(pr.f[:, 1], 10.0 / 16)
    vs_div = np.gradient(pr.vs[:, 1], 10.0 / 16)
    return {"steps": len(run.history), "max_mass_drift": drift, "final_mass_drift": run.mass_drift,
            "converged": steady.converged, "max_div_u": float(np.abs(div_u).max()),
            "u_identity": steady.history[-1]["u_identity"],
            "vs_constraint": float(np.abs(vs_div - target).max())}


def criterion_7(quick: bool = False) -> CriterionResult:
    v = conservation_check(quick)
    ok = (v["max_mass_drift"] <= 1e-9 and v["steps"] >= (1_000 if quick else 10_000)
          and v["converged"] and v["max_div_u"] <= 1e-8)
    return CriterionResult(7, "conservation", ok,
                           f"max mass drift {v['max_mass_drift']:.1e} over {v['steps']} macro steps (<= 1e-9), "
                           f"max |du_y/dy| {v['max_div_u']:.1e} at convergence (<= 1e-8)", v)


# ------------------------------------------------------------ 11


def migration_check(quick: bool = False, seed: int = 8) -> dict:
    """Wall and centre bead densities of the coupled grid solution and of an SDE ensemble.

    Gap of ten spring lengths, centreline speed ``~ L / lambda_H`` (De ~ 1).
    The SDE ensemble moves in the coupled solution's solvent velocity.
    """
    from .flows import TabulatedFlow

    p = PhysicalParams()
    L, ny = 10.0, 16
    run = _coupled(gap=L, ny=ny, nq=16, pressure_gradient=0.8)
    pr = run.profile
    N = pr.N
    centre = slice(ny // 2 - 1, ny // 2 + 1)
    fp = {"N_wall": float(0.5 * (N[0] + N[-1])), "N_center": float(N[centre].mean())}
    eq = marginal_density(equilibrium_field(run.field.grid))
    fp["N_wall_equilibrium"] = float(0.5 * (eq[0] + eq[-1]))
    flow = TabulatedFlow(pr.y, pr.vs[:, 0], gap=L)
    De = float(pr.vs[:, 0].max() / L)

    n = 4_000 if quick else 20_000
    law, geom = Hookean(), Channel(L)
    dt = 0.01
    ens = initial_inertialess_ensemble(n, law, p, geom, seed=seed)
    for _ in range(1_000):
        ens = step_inertialess_sde(ens, dt, flow, p, law, geom)
    bins = Bins.for_geometry(geom, ny)
    counts = []
    for _ in range(40 if quick else 100):
        for _ in range(50):
            ens = step_inertialess_sde(ens, dt, flow, p, law, geom)
        c = np.bincount(bins.index(ens.r1[:, 1]), minlength=ny) + np.bincount(bins.index(ens.r2[:, 1]), minlength=ny)
        counts.append(0.5 * c / bins.volume / n * L)
    counts = np.array(counts)
    Ns = counts.mean(0)
    se = _batch_stderr(counts, 10)
    wall = 0.5 * (Ns[0] + Ns[-1])
    ctr = Ns[centre].mean()
    gap_se = math.sqrt(0.25 * (se[0] ** 2 + se[-1] ** 2) + 0.25 * (se[centre] ** 2).sum())
    sde = {"N_wall": float(wall), "N_center": float(ctr), "z": float((ctr - wall) / gap_se)}
    return {"De": De, "ell0_over_L": 1.0 / L, "converged": run.converged, "fp": fp, "sde": sde,
            "fp_profile": N, "sde_profile": Ns}


def criterion_11(quick: bool = False) -> CriterionResult:
    v = migration_check(quick)
    fp, sde = v["fp"], v["sde"]
    ok = v["converged"] and fp["N_wall"] < fp["N_center"] and sde["N_wall"] < sde["N_center"] and sde["z"] >= 3
    return CriterionResult(11, "migration", ok,
                           f"De = {v['De']:.2f}: grid N_wall/N_center = {fp['N_wall'] / fp['N_center']:.3f}, "
                           f"SDE {sde['N_wall'] / sde['N_center']:.3f} (depletion at {sde['z']:.0f} SE)", v)


# ------------------------------------------------------------ 12


def mode_continuity(quick: bool = False, phis=(1e-2, 1e-3, 1e-4)) -> dict:
    """Solution against solvent formulation as the excluded volume fraction shrinks."""
    rows = []
    for phi in phis:
        p = PhysicalParams(V_d=phi)
        runs = {m: _coupled(gap=10.0, ny=16, nq=16, params=p, mode=m, tol=1e-11, macro_dt=50.0)
                for m in ("solvent", "solution")}
        a, b = runs["solvent"].profile, runs["solution"].profile
        disturbance = 0.0
        for r in runs.values():
            pr = r.profile
            lhs = pr.u - pr.vs
            rhs = p.V_d * pr.f / (2 * p.zeta)
            disturbance = max(disturbance, float(np.abs(lhs - rhs).max() / np.abs(pr.u).max()))
        rows.append({
            "phi_max": float(max(a.phi.max(), b.phi.max())),
            "converged": all(r.converged for r in runs.values()),
            "d_velocity": float(np.abs(a.vs[:, 0] - b.vs[:, 0]).max() / np.abs(a.vs[:, 0]).max()),
            "d_density": float(np.abs(a.N - b.N).max() / a.N.max()),
            "d_shear_stress": float(np.abs(a.tau[:, 0, 1] - b.tau[:, 0, 1]).max() / np.abs(a.tau[:, 0, 1]).max()),
            "disturbance_residual": disturbance,
        })
    phi_max = [r["phi_max"] for r in rows]
    slopes = {k: float(np.polyfit(np.log(phi_max), np.log([r[k] for r in rows]), 1)[0])
              for k in ("d_velocity", "d_density", "d_shear_stress")}
    return {"rows": rows, "slopes": slopes}


def criterion_12(quick: bool = False) -> CriterionResult:
    v = mode_continuity(quick)
    dist = max(r["disturbance_residual"] for r in v["rows"])
    ok = (all(r["converged"] for r in v["rows"]) and all(abs(s - 1) <= 0.1 for s in v["slopes"].values())
          and dist <= 1e-12)
    s = v["slopes"]
    return CriterionResult(12, "mode continuity", ok,
                           f"difference ~ phi_max^p with p = {s['d_velocity']:.3f} (v_s), {s['d_density']:.3f} (N), "
                           f"{s['d_shear_stress']:.3f} (tau_xy) (1 +- 0.1); "
                           f"|u - v_s - V_d f / 2 zeta| / |u| = {dist:.1e} (<= 1e-12)", v)


# ------------------------------------------------------------ suite


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 13)}


def run_criterion(number: int, quick: bool = False) -> CriterionResult:
    """Run one criterion and record its wall-clock time."""
    t0 = time.perf_counter()
    res = CRITERIA[number](quick)
    res.runtime_s = time.perf_counter() - t0
    return res


def run_suite(numbers=None, quick: bool = False, report=print) -> list:
    """Run the listed criteria (default all); ``report`` receives each result line."""
    results = []
    for k in numbers or sorted(CRITERIA):
        res = run_criterion(k, quick)
        if report is not None:
            report(res.line())
        results.append(res)
    return results
