"""Command-line front end: ``run``, ``validate`` and ``suite``.

Exit codes: 0 success, 2 invalid configuration (nothing written),
3 solver failure (a ``failure.json`` with the residual history is written).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time
import warnings
from dataclasses import dataclass, field as dc_field
from importlib import resources

import numpy as np

from . import __version__
from .core import FENE, Channel, DomainError, FreeSpace, Hookean, PeriodicBox, PhysicalParams, nondim_groups, ell0
from .flows import CouetteFlow, PoiseuilleFlow, ShearFlow, ZeroFlow
from .inertialess import ConvergenceError, StabilityError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

SCENARIOS = ("equilibrium", "couette", "poiseuille", "homogeneous_shear", "epsilon_ladder", "identity_suite")
SOLVERS = ("langevin", "inertialess_sde", "fokker_planck", "coupled")


class ConfigError(ValueError):
    """Configuration failed schema or compatibility checks; ``problems`` lists each one."""

    def __init__(self, problems):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


def load_schema() -> dict:
    return json.loads(resources.files("dumbbellflow").joinpath("run_config.schema.json").read_text())


@dataclass
class RunConfig:
    """Validated run description. Missing entries take the schema defaults."""

    scenario: str
    solver: str
    mode: str = "solvent"
    stress_mode: str = "wall_aware"
    seed: int = 0
    threads: int | None = None
    output_dir: str | None = None
    description: str = ""
    physical: dict = dc_field(default_factory=dict)
    numerical: dict = dc_field(default_factory=dict)
    warnings: list = dc_field(default_factory=list)

    # ------------------------------------------------------------ derived

    @property
    def geometry(self) -> str:
        g = self.physical.get("geometry")
        if g:
            return g
        return "free" if self.scenario in ("homogeneous_shear", "epsilon_ladder") else "channel"

    @property
    def gap(self) -> float:
        return float(self.physical.get("gap", 10.0))

    def params(self) -> PhysicalParams:
        keys = ("zeta", "kBT", "mass", "eta_s", "rho_s", "V_d", "dim")
        kw = {k: self.physical[k] for k in keys if k in self.physical}
        kw["N_av"] = self.physical.get("N0", 1.0)
        return PhysicalParams(**kw)

    def law(self):
        H = float(self.physical.get("H", 1.0))
        if self.physical.get("spring", "hookean") == "fene":
            return FENE(H=H, q0=float(self.physical["q0"]))
        return Hookean(H=H)

    def geom(self):
        return {"channel": Channel, "periodic": PeriodicBox, "free": lambda _: FreeSpace()}[self.geometry](self.gap)

    def flow(self):
        ph = self.physical
        p = self.params()
        if self.scenario == "couette":
            return CouetteFlow(self.gap, float(ph["wall_velocity"]))
        if self.scenario == "poiseuille":
            # Newtonian solvent profile for the imposed-flow solvers
            return PoiseuilleFlow(self.gap, float(ph["pressure_gradient"]) * self.gap**2 / (8 * p.eta_s))
        if self.scenario == "homogeneous_shear":
            return ShearFlow(float(ph["shear_rate"]))
        return ZeroFlow()

    def velocity_scale(self) -> float:
        ph = self.physical
        if "velocity_scale" in ph:
            return float(ph["velocity_scale"])
        if self.scenario == "couette" and ph.get("wall_velocity"):
            return abs(float(ph["wall_velocity"]))
        if self.scenario == "poiseuille" and ph.get("pressure_gradient"):
            return abs(self.flow().vmax)
        if self.scenario in ("homogeneous_shear", "epsilon_ladder") and ph.get("shear_rate"):
            return abs(float(ph["shear_rate"])) * self.gap
        return 1.0

    def num(self, key, default):
        return self.numerical.get(key, default)

    def as_dict(self) -> dict:
        return {"scenario": self.scenario, "solver": self.solver, "mode": self.mode,
                "stress_mode": self.stress_mode, "seed": self.seed, "threads": self.threads,
                "output_dir": self.output_dir, "description": self.description,
                "physical": dict(self.physical), "numerical": dict(self.numerical)}


def _schema_problems(raw) -> list:
    from jsonschema import Draft202012Validator

    validator = Draft202012Validator(load_schema())
    out = []
    for err in sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path)):
        where = "/".join(str(x) for x in err.absolute_path) or "<root>"
        if err.validator == "additionalProperties":
            known = set(err.schema.get("properties", {}))
            extra = sorted(set(err.instance) - known)
            out.append(f"{where}: unknown key(s) {', '.join(map(repr, extra))}")
        else:
            out.append(f"{where}: {err.message}")
    return out


def _compatibility(rc: RunConfig, explicit: bool = True) -> tuple:
    """``(errors, warnings)`` for combinations the schema cannot express."""
    errs, warn = [], []
    ph, dim = rc.physical, rc.physical.get("dim", 2)
    if rc.solver in ("fokker_planck", "coupled") and dim == 3:
        errs.append(f"solver {rc.solver!r} supports dim=2 only")
    if ph.get("spring") == "fene" and "q0" not in ph:
        errs.append("physical/q0 is required for FENE springs")
    if rc.scenario == "couette" and "wall_velocity" not in ph:
        errs.append("couette needs physical/wall_velocity")
    if rc.scenario == "poiseuille" and "pressure_gradient" not in ph:
        errs.append("poiseuille needs physical/pressure_gradient")
    if rc.scenario == "homogeneous_shear" and "shear_rate" not in ph:
        errs.append("homogeneous_shear needs physical/shear_rate")
    if rc.scenario in ("couette", "poiseuille") and rc.geometry != "channel":
        errs.append(f"{rc.scenario} needs a channel geometry")
    if rc.scenario == "homogeneous_shear" and rc.geometry == "channel":
        errs.append("homogeneous_shear needs geometry 'free' or 'periodic'")
    if rc.scenario == "epsilon_ladder" and rc.solver != "langevin":
        errs.append("epsilon_ladder compares the inertial solver against its limit; use solver 'langevin'")
    if rc.solver == "coupled" and rc.scenario not in ("equilibrium", "couette", "poiseuille", "identity_suite"):
        errs.append("the coupled solver runs channel scenarios only")
    if rc.solver == "coupled" and rc.geometry != "channel":
        errs.append("the coupled solver needs a channel geometry")
    if rc.stress_mode == "wall_aware" and rc.geometry == "free" and (explicit or rc.solver == "fokker_planck"):
        warn.append("stress_mode 'wall_aware' in free space reduces to the homogeneous stress")
    if rc.mode == "solution" and rc.solver in ("fokker_planck", "inertialess_sde", "langevin") \
            and rc.scenario != "identity_suite":
        warn.append("imposed-flow solvers treat the prescribed velocity as the mixture velocity in solution mode")
    if rc.solver == "langevin" and "mass" not in ph and rc.scenario != "epsilon_ladder":
        warn.append("bead mass not set; using the default 0.04 kg")
    return errs, warn


def parse_config(raw) -> RunConfig:
    """Validate a decoded JSON object and build a :class:`RunConfig`. Raises :class:`ConfigError`."""
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a JSON object"])
    problems = _schema_problems(raw)
    if problems:
        raise ConfigError(problems)
    rc = RunConfig(**{k: raw[k] for k in raw})
    errs, warn = _compatibility(rc, explicit="stress_mode" in raw)
    if not errs:
        try:
            rc.params()
            rc.law()
        except ValueError as exc:
            errs.append(str(exc))
    if errs:
        raise ConfigError(errs)
    rc.warnings = warn
    return rc


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None
    return parse_config(raw)


def groups_report(rc: RunConfig) -> dict:
    """Dimensionless groups for the configured parameters."""
    p, law = rc.params(), rc.law()
    V, L = rc.velocity_scale(), rc.gap
    g = nondim_groups(p, law, V, L)
    return {"De": g.De, "Re": g.Re, "ell0": ell0(p, law), "L": L, "ell0_over_L": g.ell_ratio,
            "epsilon": g.epsilon, "lambda_H": g.lambda_H, "lambda_B": g.lambda_B, "V": V}


# ----------------------------------------------------------------- outputs


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_table(path, columns, units, data):
    """RFC-4180 CSV with a leading ``# units:`` comment line."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    with open(path, "w", newline="") as fh:
        fh.write("# units: " + ", ".join(f"{c} [{u}]" for c, u in zip(columns, units)) + "\n")
        fh.write(",".join(columns) + "\n")
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")


class Output:
    """Collects tables during a run; nothing touches disk until :meth:`flush`."""

    def __init__(self):
        self.tables = []
        self.writers = []

    def table(self, name, columns, units, data):
        self.tables.append((name, columns, units, data))

    def custom(self, name, writer):
        self.writers.append((name, writer))

    def flush(self, out_dir) -> list:
        written = []
        for name, columns, units, data in self.tables:
            write_table(os.path.join(out_dir, name), columns, units, data)
            written.append(name)
        for name, writer in self.writers:
            writer(os.path.join(out_dir, name))
            written.append(name)
        return written


# ------------------------------------------------------------- scenarios


def _tensor_dict(T) -> dict:
    T = np.asarray(T)
    return {"xx": T[0, 0], "xy": T[0, 1], "yy": T[1, 1]}


def _closure_stress(rc: RunConfig, rate: float, N: float):
    """Closed homogeneous-shear stress (Oldroyd-B, or FENE-P for FENE springs)."""
    from .oracle import constitutive_ode

    p, law = rc.params(), rc.law()
    lam = p.zeta / (4 * law.H)
    if isinstance(law, FENE):
        return constitutive_ode(rate, lam, "FENE_P", t_final=40 * lam, b=law.b(p.kBT), N_kBT=N * p.kBT)[1]
    return constitutive_ode(rate, lam, "OldroydB", t_final=40 * lam, N_kBT=N * p.kBT)[1]


def _run_fokker_planck(rc: RunConfig, out: Output) -> dict:
    from .inertialess import (FokkerPlanckOperator, KineticGrid, equilibrium_field, marginal_density,
                              second_moments, total_mass, write_field_csv)
    from .stress import stress_homogeneous, stress_taylor, stress_wall_aware, wall_stress_ratio

    p, law, geom = rc.params(), rc.law(), rc.geom()
    ny, nq = rc.num("ny", 32), rc.num("nq", 32)
    grid = KineticGrid(geom, law, p, ny=ny, nq=nq, q_half=rc.num("q_half", None))
    start = equilibrium_field(grid, p.N_av)
    op = FokkerPlanckOperator(grid, p, rc.flow())
    psi, history = op.steady_state(start.psi, tol=rc.num("tol", 1e-10))
    field = start.copy(psi=psi)
    summary = {"steady_iterations": len(history), "residual_history": history,
               "mass_drift": abs(total_mass(field) / total_mass(start) - 1), "grid_shape": list(grid.shape)}
    kT = p.kBT
    if not grid.has_y:
        st = stress_homogeneous(field, rc.mode)
        N = float(st.N[0])
        summary.update({"second_moments": _tensor_dict(second_moments(field)[0]),
                        "stress": _tensor_dict(st.tau[0]),
                        "stress_norm_over_NkT": float(np.linalg.norm(st.tau[0]) / (N * kT))})
        if rc.scenario == "homogeneous_shear":
            tau_ref = _closure_stress(rc, float(rc.physical["shear_rate"]), N)
            summary["closure_stress"] = _tensor_dict(tau_ref)
            summary["closure_relative_error"] = float(np.linalg.norm(st.tau[0] - tau_ref) / np.linalg.norm(tau_ref))
        return summary
    if rc.stress_mode == "wall_aware":
        st = stress_wall_aware(field, method="cell", mode=rc.mode)
    elif rc.stress_mode == "homogeneous":
        st = stress_homogeneous(field, rc.mode)
    else:
        st = stress_taylor(field, 0 if rc.stress_mode == "taylor0" else 2, rc.mode)
    N = marginal_density(field)
    ratio = np.linalg.norm(st.tau, axis=(1, 2)) / (N * kT)
    # cells more than 3 spring lengths from both walls
    reach = 3 * ell0(p, law)
    bulk = (grid.y > reach) & (grid.y < grid.length - reach) if not grid.periodic else np.ones(ny, bool)
    n = grid.ny
    centre = slice(n // 2 - 1, n // 2 + 1)
    summary.update({
        "stress_norm_over_NkT_max": float(ratio.max()),
        "stress_norm_over_NkT_bulk": float(ratio[bulk].max()) if bulk.any() else None,
        "N_wall": float(0.5 * (N[0] + N[-1])), "N_center": float(N[centre].mean()),
    })
    if isinstance(geom, Channel) and n >= 3:
        summary["wall_stress_ratio"] = wall_stress_ratio(field)
    out.table("profiles.csv", ["y", "N", "tau_xx", "tau_xy", "tau_yy"], ["m", "1/m^2", "Pa", "Pa", "Pa"],
              np.column_stack([grid.y, N, st.tau[:, 0, 0], st.tau[:, 0, 1], st.tau[:, 1, 1]]))
    out.custom("field.csv", lambda path: write_field_csv(path, field))
    return summary


def _batch_mean_se(samples, batches=10):
    samples = np.asarray(samples)
    m = len(samples) // batches * batches
    if m < 2 * batches:
        return samples.mean(0), np.full(samples.shape[1:], np.nan)
    b = samples[:m].reshape((batches, -1) + samples.shape[1:]).mean(1)
    return samples.mean(0), b.std(0, ddof=1) / math.sqrt(batches)


def _run_particles(rc: RunConfig, out: Output) -> dict:
    from .inertialess import initial_inertialess_ensemble, step_inertialess_sde
    from .langevin import Bins, initial_inertial_ensemble, kinetic_temperature, step_inertial
    from .oracle import inertial_dumbbell_covariance, inertialess_dumbbell_covariance, shear_gradient

    p, law, geom, flow = rc.params(), rc.law(), rc.geom(), rc.flow()
    d = p.dim
    n = rc.num("n_particles", 10_000)
    inertial = rc.solver == "langevin"
    lam = p.zeta / (4 * law.H)
    dt = rc.num("dt", 0.1 * p.lambda_B if inertial else 0.002 * lam)
    t_final = rc.num("t_final", 20 * lam)
    samples = rc.num("samples", 100)
    every = rc.num("sample_every", max(1, int(round(0.5 * t_final / (samples * dt)))))
    burn = max(0, int(round(t_final / dt)) - samples * every)
    if inertial:
        ens = initial_inertial_ensemble(n, law, p, geom, seed=rc.seed, v_field=flow)
        scheme = rc.num("scheme", "baoab")

        def advance(e):
            return step_inertial(e, dt, flow, p, law, geom, mode=rc.mode, scheme=scheme)
    else:
        ens = initial_inertialess_ensemble(n, law, p, geom, seed=rc.seed)

        def advance(e):
            return step_inertialess_sde(e, dt, flow, p, law, geom)

    for _ in range(burn):
        ens = advance(ens)
    qq, qF, temps, counts = [], [], [], []
    channel = isinstance(geom, (Channel, PeriodicBox))
    bins = Bins.for_geometry(geom, rc.num("n_bins", 20)) if channel else None
    for _ in range(samples):
        for _ in range(every):
            ens = advance(ens)
        q = ens.q
        F = law.force(q)
        qq.append(q.T @ q / n)
        qF.append(q.T @ F / n)
        if inertial:
            temps.append(kinetic_temperature(ens, p, flow))
        if channel:
            c = np.bincount(bins.index(ens.r1[:, 1]), minlength=bins.n) + \
                np.bincount(bins.index(ens.r2[:, 1]), minlength=bins.n)
            counts.append(0.5 * c / bins.volume * p.N_av * rc.gap / n)
    qq_mean, qq_se = _batch_mean_se(qq)
    qF_mean, qF_se = _batch_mean_se(qF)
    tau = p.N_av * (qF_mean - p.kBT * np.eye(d))
    summary = {
        "n_particles": n, "dt": dt, "samples": samples, "sample_every": every, "burn_steps": burn,
        "second_moments": qq_mean, "second_moments_stderr": qq_se,
        "stress": tau, "stress_stderr": p.N_av * qF_se,
        "stress_norm_over_NkT": float(np.linalg.norm(tau) / (p.N_av * p.kBT)),
        "rng": {"generator": "philox4x32-10", "seed": rc.seed, "stream": 0 if inertial else 1,
                "particle_ids": [0, n - 1], "draws_per_step": 2 * d},
    }
    if inertial:
        T, T_se = _batch_mean_se(np.array(temps))
        summary.update({"kinetic_temperature": T, "kinetic_temperature_stderr": T_se,
                        "reflections": int(ens.reflections)})
    if rc.scenario == "homogeneous_shear" and isinstance(law, Hookean) and d == 2:
        kappa = shear_gradient(float(rc.physical["shear_rate"]), d)
        ref = (inertial_dumbbell_covariance(p, law, kappa)["qq"] if inertial
               else inertialess_dumbbell_covariance(p, law, kappa))
        summary["reference_second_moments"] = ref
        with np.errstate(divide="ignore", invalid="ignore"):
            summary["reference_z"] = (qq_mean - ref) / qq_se
    if channel:
        N_mean, N_se = _batch_mean_se(np.array(counts))
        summary["N_profile_stderr_max"] = float(np.nanmax(N_se))
        summary["N_wall"] = float(0.5 * (N_mean[0] + N_mean[-1]))
        summary["N_center"] = float(N_mean[bins.n // 2 - 1: bins.n // 2 + 1].mean())
        out.table("profiles.csv", ["y", "N", "N_stderr"], ["m", "1/m^2", "1/m^2"],
                  np.column_stack([bins.centers, N_mean, N_se]))
    return summary


def _run_coupled(rc: RunConfig, out: Output) -> dict:
    from .stress import wall_stress_ratio
    from .transport import CoupledConfig, Forcing, coupled_solve, write_profiles_csv

    ph = rc.physical
    p = rc.params()
    forcing = Forcing(pressure_gradient=float(ph.get("pressure_gradient", 0.0)),
                      wall_velocity=(0.0, float(ph.get("wall_velocity", 0.0))))
    cfg = CoupledConfig(gap=rc.gap, params=p, law=rc.law(), mode=rc.mode, stress_mode=rc.stress_mode,
                        forcing=forcing, ny=rc.num("ny", 32), nq=rc.num("nq", 32), q_half=rc.num("q_half", None),
                        N0=p.N_av, t_final=rc.num("t_final", 4000.0), macro_dt=rc.num("macro_dt", 20.0),
                        relaxation=rc.num("relaxation", 0.5), tol=rc.num("tol", 1e-7),
                        kinetic_stepping=rc.num("kinetic_stepping", "implicit"))
    res = coupled_solve(cfg)
    pr = res.profile
    n = pr.y.size
    centre = slice(n // 2 - 1, n // 2 + 1)
    summary = {
        "converged": res.converged, "steps": len(res.history), "mass_drift": res.mass_drift,
        "residual_history": [h["velocity_change"] for h in res.history],
        "N_wall": float(0.5 * (pr.N[0] + pr.N[-1])), "N_center": float(pr.N[centre].mean()),
        "vs_max": float(pr.vs[:, 0].max()), "phi_max": float(pr.phi.max()),
        "u_identity_residual": pr.u_identity_residual(),
        "wall_stress_ratio": wall_stress_ratio(res.field) if res.field is not None else None,
    }
    out.custom("profiles.csv", lambda path: write_profiles_csv(path, [pr]))
    if not res.converged:
        raise ConvergenceError(f"coupled run not converged after {len(res.history)} steps", res.history)
    return summary


def _run_ladder(rc: RunConfig, out: Output) -> dict:
    from .acceptance import epsilon_ladder

    kw = {}
    if "eps_values" in rc.numerical:
        kw["eps_values"] = tuple(rc.numerical["eps_values"])
    if "dt_ratio" in rc.numerical:
        kw["dt_ratio"] = rc.numerical["dt_ratio"]
    v = epsilon_ladder(rc.num("quick", False), gammadot=float(rc.physical.get("shear_rate", 1.0)),
                       seed=rc.seed, **kw)
    rows = v["rows"]
    out.table("ladder.csv", ["eps", "dt", "error", "exact_error"], ["-", "s", "m^2", "m^2"],
              [[r["eps"], r["dt"], r["error"], r["exact_error"]] for r in rows])
    e = v["errors"]
    return {"eps": [r["eps"] for r in rows], "errors": e, "exact_errors": [r["exact_error"] for r in rows],
            "fitted_order": v["order"], "fitted_order_ci": v["order_ci"],
            "strictly_decreasing": all(b < a for a, b in zip(e, e[1:]))}


def _run_identities(rc: RunConfig, out: Output) -> dict:
    from .acceptance import run_suite

    numbers = rc.num("criteria", [5, 8, 10])
    res = run_suite(numbers, quick=rc.num("quick", False), report=None)
    out.table("criteria.csv", ["criterion", "passed", "runtime"], ["-", "-", "s"],
              [[r.number, float(r.passed), r.runtime_s] for r in res])
    return {"criteria": {str(r.number): {"name": r.name, "passed": r.passed, "summary": r.summary} for r in res},
            "all_passed": all(r.passed for r in res)}


def execute(rc: RunConfig, out: Output) -> dict:
    """Run the configured scenario; returns the summary dictionary."""
    if rc.scenario == "epsilon_ladder":
        return _run_ladder(rc, out)
    if rc.scenario == "identity_suite":
        return _run_identities(rc, out)
    if rc.solver == "fokker_planck":
        return _run_fokker_planck(rc, out)
    if rc.solver == "coupled":
        return _run_coupled(rc, out)
    return _run_particles(rc, out)


def _versions() -> dict:
    import numba
    import scipy

    return {"dumbbellflow": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def cmd_run(path, out_dir=None, threads=None, stream=None) -> int:
    from .rng import set_threads
    from .transport import run_id

    stream = stream or sys.stdout
    try:
        rc = load_config(path)
    except ConfigError as exc:
        for msg in exc.problems:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    for w in rc.warnings:
        print(f"warning: {w}", file=sys.stderr)
    set_threads(threads or rc.threads)
    echo = rc.as_dict()
    rid = run_id(echo)
    out_dir = out_dir or rc.output_dir or os.path.join("runs", rid)
    out = Output()
    t0 = time.perf_counter()
    failure = None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            summary = execute(rc, out)
    except (ConvergenceError, StabilityError, DomainError, FloatingPointError, np.linalg.LinAlgError) as exc:
        failure = {"error": type(exc).__name__, "message": str(exc),
                   "residual_history": getattr(exc, "history", None)}
        if isinstance(exc, StabilityError):
            failure.update({"term": exc.term, "dt_max": exc.dt_max})
    os.makedirs(out_dir, exist_ok=True)
    meta = {"config": echo, "run_id": rid, "seed": rc.seed, "versions": _versions(),
            "wall_clock_s": time.perf_counter() - t0, "groups": groups_report(rc), "warnings": rc.warnings,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
    if failure is not None:
        meta["failure"] = failure
        write_json(os.path.join(out_dir, "metadata.json"), meta)
        write_json(os.path.join(out_dir, "failure.json"), failure)
        print(f"solver failure: {failure['message']}", file=sys.stderr)
        return EXIT_SOLVER
    meta["files"] = out.flush(out_dir) + ["summary.json", "metadata.json"]
    write_json(os.path.join(out_dir, "summary.json"), {"scenario": rc.scenario, "solver": rc.solver, **summary})
    write_json(os.path.join(out_dir, "metadata.json"), meta)
    print(f"wrote {out_dir}", file=stream)
    return EXIT_OK


def cmd_validate(path, stream=None) -> int:
    stream = stream or sys.stdout
    try:
        rc = load_config(path)
    except ConfigError as exc:
        print("INVALID", file=stream)
        for msg in exc.problems:
            print(f"  {msg}", file=stream)
        return EXIT_CONFIG
    g = groups_report(rc)
    print("OK", file=stream)
    print(f"  scenario={rc.scenario} solver={rc.solver} mode={rc.mode} stress_mode={rc.stress_mode} "
          f"geometry={rc.geometry}", file=stream)
    print(f"  De={g['De']:.6g} Re={g['Re']:.6g} ell0={g['ell0']:.6g} L={g['L']:.6g} "
          f"ell0/L={g['ell0_over_L']:.6g} eps={g['epsilon']:.6g}", file=stream)
    for w in rc.warnings:
        print(f"  warning: {w}", file=stream)
    return EXIT_OK


def cmd_suite(quick=False, numbers=None, out_dir=None, stream=None) -> int:
    from .acceptance import run_suite

    stream = stream or sys.stdout
    stream.write(f"{'#':>2}  {'result':6}  criterion\n")
    results = run_suite(numbers, quick=quick, report=lambda line: (stream.write(line + "\n"), stream.flush()))
    passed = sum(r.passed for r in results)
    stream.write(f"{passed}/{len(results)} criteria passed\n")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_json(os.path.join(out_dir, "suite.json"),
                   {str(r.number): {"name": r.name, "passed": r.passed, "summary": r.summary,
                                    "runtime_s": r.runtime_s} for r in results})
    return EXIT_OK if passed == len(results) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dumbbellflow", description="Dumbbell polymer flow solvers.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a configured scenario")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: config output_dir or runs/<run id>)")
    r.add_argument("--threads", type=int, help="cap on worker threads")
    v = sub.add_parser("validate", help="check a configuration without running it")
    v.add_argument("config")
    s = sub.add_parser("suite", help="run the acceptance battery")
    s.add_argument("--quick", action="store_true", help="smaller ensembles and grids")
    s.add_argument("--only", type=int, nargs="+", metavar="N", help="criterion numbers to run")
    s.add_argument("--out", help="directory for suite.json")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.out, args.threads)
    if args.command == "validate":
        return cmd_validate(args.config)
    return cmd_suite(args.quick, args.only, args.out)


if __name__ == "__main__":
    sys.exit(main())
