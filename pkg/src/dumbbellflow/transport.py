"""Macroscopic coupling in a plane channel with profiles that vary along ``y`` only.

Wall impermeability and ``div u = 0`` give ``u_y = 0``, so the wall-normal
solvent velocity follows from the polymer force, ``v_sy = -V_d f_y / (2 zeta)``.
The streamwise solvent momentum is advanced implicitly; the wall-normal
balance only determines the solvent pressure.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field as dc_field, is_dataclass

import numpy as np
from scipy import linalg

from .core import Channel, Hookean, PhysicalParams
from .flows import TabulatedFlow
from .inertialess import (
    ConvergenceError,
    FokkerPlanckOperator,
    KineticField,
    KineticGrid,
    StabilityError,
    equilibrium_field,
    marginal_density,
    total_mass,
)
from .stress import (
    StressField,
    derivative_y,
    face_divergence,
    face_positions,
    spring_stress,
    stress_homogeneous,
    stress_taylor,
    total_polymer_force,
)

PROFILE_COLUMNS = ("t", "y", "N", "phi", "vs_x", "vp_x", "u_x", "tau_xx", "tau_xy", "tau_yy", "p_p")


@dataclass
class FieldProfile:
    """Macroscopic state per y-cell. Vectors are ``(n, 2)``, ``tau`` is ``(n, 2, 2)``."""

    y: np.ndarray
    N: np.ndarray
    phi: np.ndarray
    vs: np.ndarray
    vp: np.ndarray
    u: np.ndarray
    p_s: np.ndarray
    p_p: np.ndarray
    p: np.ndarray
    tau: np.ndarray
    f: np.ndarray = None
    t: float = 0.0

    def u_identity_residual(self) -> float:
        """``max |u - (phi v_p + (1 - phi) v_s)|``."""
        mix = self.phi[:, None] * self.vp + (1 - self.phi)[:, None] * self.vs
        return float(np.max(np.abs(self.u - mix)))

    def check(self, atol: float = 1e-12):
        if np.any(self.phi < 0) or np.any(self.phi >= 1):
            raise ValueError("volume fraction outside [0, 1)")
        scale = max(1.0, float(np.max(np.abs(self.u))))
        if self.u_identity_residual() > atol * scale:
            raise ValueError("u differs from the volume-averaged velocity")


@dataclass(frozen=True)
class Forcing:
    """Streamwise driving: ``pressure_gradient = -dp/dx`` and wall speeds ``(bottom, top)``."""

    pressure_gradient: float = 0.0
    wall_velocity: tuple = (0.0, 0.0)


# ------------------------------------------------------------ velocities


@dataclass
class PolymerVelocity:
    vp: np.ndarray
    force: np.ndarray
    undefined: np.ndarray  # cells with N = 0


def polymer_velocity(v_s, tau: StressField, N_profile, params: PhysicalParams, mode: str = "solvent",
                     phi=None, dy: float = None, periodic: bool = False,
                     spring_divergence=None) -> PolymerVelocity:
    """``v_p = v_s + f / (2 zeta N)``; in solvent mode ``f = div tau - grad p_p``.

    Cells with ``N = 0`` get NaN and are listed in ``undefined``.
    """
    N = np.asarray(N_profile, dtype=float)
    dec = total_polymer_force(tau, N, mode, phi, dy, periodic, spring_divergence=spring_divergence)
    v_s = np.asarray(v_s, dtype=float)
    empty = N <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        vp = v_s + dec.f / (2 * params.zeta * N)[:, None]
    vp[empty] = np.nan
    return PolymerVelocity(vp, dec.f, empty)


def wall_normal_solvent_velocity(f: np.ndarray, params: PhysicalParams) -> np.ndarray:
    """``v_sy`` that makes ``u_y = 0``: ``-V_d f_y / (2 zeta)``."""
    return -params.V_d * np.asarray(f)[:, 1] / (2 * params.zeta)


def divergence_constraint(N_profile, tau: StressField, params: PhysicalParams, v_s=None,
                          mode: str = "solvent", phi=None, dy: float = None,
                          spring_divergence=None):
    """Target ``div v_s = V_d [(kBT/2 zeta) lap N - (1/2 zeta) div div tau]``.

    In one dimension this is ``-(V_d / 2 zeta) d f_y / dy``. Returns
    ``(target, residual)``; ``residual`` is ``d v_sy/dy - target`` for the
    supplied ``v_s`` (``None`` when no velocity is given).
    """
    N = np.asarray(N_profile, dtype=float)
    if dy is None:
        dy = float(tau.y[1] - tau.y[0])
    dec = total_polymer_force(tau, N, mode, phi, dy, spring_divergence=spring_divergence)
    target = -params.V_d / (2 * params.zeta) * derivative_y(dec.f[:, 1], dy)
    if v_s is None:
        return target, None
    return target, derivative_y(np.asarray(v_s)[:, 1], dy) - target


def mixture_divergence(profile: FieldProfile, dy: float) -> np.ndarray:
    """Discrete ``d u_y / dy``."""
    return derivative_y(profile.u[:, 1], dy)


# --------------------------------------------------------------- density


def density_stability_bound(v_s, dy: float, params: PhysicalParams) -> float:
    D = params.kBT / (2 * params.zeta)
    vmax = float(np.max(np.abs(np.asarray(v_s)[:, 1]), initial=0.0))
    diff = dy * dy / (2 * D)
    return min(diff, dy / vmax) if vmax > 0 else diff


def density_step(N_profile, v_s_profile, tau, dt: float, params: PhysicalParams, dy: float,
                 periodic: bool = False) -> np.ndarray:
    """Flux-form update of ``dN/dt + div(v_s N) = (kBT/2 zeta) lap N - (1/2 zeta) div div tau``.

    The face flux is ``N v_s,y + (1/2 zeta) d tau_yy/dy - (kBT/2 zeta) dN/dy``,
    i.e. ``N v_p``; it vanishes at channel walls.
    """
    N = np.asarray(N_profile, dtype=float)
    v = np.asarray(v_s_profile, dtype=float)[:, 1]
    t = tau.tau if isinstance(tau, StressField) else np.asarray(tau, dtype=float)
    tyy = t[:, 1, 1]
    bound = density_stability_bound(v_s_profile, dy, params)
    if dt > bound * (1 + 1e-12):
        raise StabilityError(f"density step dt={dt:.3e} exceeds bound {bound:.3e}", "density", bound)
    zeta, kT = params.zeta, params.kBT
    if periodic:
        N_, v_, t_ = N, v, tyy
        Nr, vr, tr = np.roll(N, -1), np.roll(v, -1), np.roll(tyy, -1)
    else:
        N_, v_, t_ = N[:-1], v[:-1], tyy[:-1]
        Nr, vr, tr = N[1:], v[1:], tyy[1:]
    J = 0.25 * (N_ + Nr) * (v_ + vr) + (tr - t_) / (2 * zeta * dy) - kT * (Nr - N_) / (2 * zeta * dy)
    if periodic:
        return N - dt * (J - np.roll(J, 1)) / dy
    Jf = np.concatenate([[0.0], J, [0.0]])
    return N - dt * np.diff(Jf) / dy


# -------------------------------------------------------------- momentum


def _second_difference_matrix(n: int, dy: float):
    """Banded ``d^2/dy^2`` with ghost-cell Dirichlet walls: ``(ab, wall_weights)``."""
    ab = np.zeros((3, n))
    ab[0, 1:] = 1.0 / dy**2
    ab[1, :] = -2.0 / dy**2
    ab[2, :-1] = 1.0 / dy**2
    ab[1, 0] -= 1.0 / dy**2
    ab[1, -1] -= 1.0 / dy**2
    return ab, 2.0 / dy**2


def _apply_banded(ab, x):
    out = ab[1] * x
    out[:-1] += ab[0, 1:] * x[1:]
    out[1:] += ab[2, :-1] * x[:-1]
    return out


def steady_streamwise_velocity(gap: float, n: int, params: PhysicalParams, forcing: Forcing,
                               body_force=None) -> np.ndarray:
    """Cell-centre solution of ``eta_s v'' + G + body_force = 0`` with no-slip walls."""
    dy = gap / n
    ab, wall = _second_difference_matrix(n, dy)
    rhs = -np.full(n, forcing.pressure_gradient, dtype=float)
    if body_force is not None:
        rhs = rhs - np.asarray(body_force, dtype=float)
    rhs = rhs / params.eta_s
    rhs[0] -= wall * forcing.wall_velocity[0]
    rhs[-1] -= wall * forcing.wall_velocity[1]
    return linalg.solve_banded((1, 1), ab, rhs)


def _wall_values(values, wall):
    """Cell-centre array extended by wall nodes (used for derivatives)."""
    return np.concatenate([[wall[0]], values, [wall[1]]])


def solvent_momentum_step(profile: FieldProfile, dt: float, params: PhysicalParams, gap: float,
                          mode: str = "solvent", forcing: Forcing = Forcing(), force=None,
                          advect: bool = True) -> FieldProfile:
    """Advance the solvent velocity by ``dt`` (backward Euler viscous term).

    ``force`` is the polymer force on the solvent ``f`` per cell; by default it
    is computed from ``profile.tau`` and ``profile.N`` for the given mode.
    """
    if mode not in ("solvent", "solution"):
        raise ValueError(f"unknown mode {mode!r}")
    phi = np.asarray(profile.phi, dtype=float)
    if np.any(phi >= 1):
        raise ValueError("volume fraction reached 1")
    n = profile.y.size
    dy = gap / n
    rho, eta = params.rho_s, params.eta_s
    if force is None:
        tau = StressField(profile.y, profile.tau, profile.N, params.kBT)
        force = total_polymer_force(tau, profile.N, mode, phi, dy).f
    f = np.asarray(force, dtype=float)
    vsy = wall_normal_solvent_velocity(f, params)
    vx = profile.vs[:, 0]
    mass = rho * (1 - phi)
    rhs = mass * vx / dt + forcing.pressure_gradient + f[:, 0]
    if advect:
        ext = _wall_values(vx, forcing.wall_velocity)
        dvx = (ext[2:] - ext[:-2]) / (2 * dy)
        dvx[0] = (ext[2] + ext[1] - 2 * ext[0]) / (3 * dy) if n > 1 else 0.0
        dvx[-1] = (2 * ext[-1] - ext[-2] - ext[-3]) / (3 * dy) if n > 1 else 0.0
        rhs = rhs - mass * vsy * dvx
    ab, wall = _second_difference_matrix(n, dy)
    ab = -eta * ab
    ab[1] += mass / dt
    rhs[0] += eta * wall * forcing.wall_velocity[0]
    rhs[-1] += eta * wall * forcing.wall_velocity[1]
    vx_new = linalg.solve_banded((1, 1), ab, rhs)
    resid = np.linalg.norm(_apply_banded(ab, vx_new) - rhs)
    if not np.isfinite(resid) or resid > 1e-9 * max(1.0, np.linalg.norm(rhs)):
        raise ConvergenceError("implicit momentum solve failed", [float(resid)])

    vs = np.stack([vx_new, vsy], -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        vp = vs + f / (2 * params.zeta * profile.N)[:, None]
    vp[profile.N <= 0] = np.nan
    u = phi[:, None] * vp + (1 - phi)[:, None] * vs
    u[profile.N <= 0] = vs[profile.N <= 0]
    # wall-normal balance: d p_s/dy = 2 eta d^2 v_sy/dy^2 + f_y - rho (1 - phi) D v_sy/Dt
    ext = _wall_values(vsy, (0.0, 0.0))
    d2 = (ext[2:] - 2 * ext[1:-1] + ext[:-2]) / dy**2
    inertia = mass * ((vsy - profile.vs[:, 1]) / dt + vsy * derivative_y(vsy, dy))
    dp = 2 * eta * d2 + f[:, 1] - inertia
    p_s = np.concatenate([[0.0], np.cumsum(0.5 * (dp[1:] + dp[:-1]) * dy)])
    p_p = profile.N * params.kBT
    return FieldProfile(profile.y, profile.N, phi, vs, vp, u, p_s, p_p, p_s + p_p, profile.tau, f,
                        profile.t + dt)


# ----------------------------------------------------------- coupled run


STRESS_MODES = ("wall_aware", "homogeneous", "taylor0", "taylor2")


@dataclass
class CoupledConfig:
    """Settings for :func:`coupled_solve`.

    ``kinetic=False`` runs the reduced model: Oldroyd-B conformation per cell
    (``taylor0`` stress) plus the number-density equation.
    """

    gap: float = 10.0
    params: PhysicalParams = dc_field(default_factory=PhysicalParams)
    law: object = dc_field(default_factory=Hookean)
    mode: str = "solvent"
    stress_mode: str = "wall_aware"
    forcing: Forcing = Forcing()
    ny: int = 32
    nq: int = 32
    q_half: float = None
    N0: float = 1.0
    t_final: float = 10.0
    macro_dt: float = 0.05
    relaxation: float = 0.5
    tol: float = 1e-8
    velocity_mode: str = "exact"
    start: str = "newtonian"
    snapshot_every: int = 0
    profile_every: int = 1
    kinetic: bool = True
    divergence_limit: float = 1e8
    kinetic_stepping: str = "explicit"

    def validate(self):
        if self.mode not in ("solvent", "solution"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.stress_mode not in STRESS_MODES:
            raise ValueError(f"unknown stress mode {self.stress_mode!r}")
        if not (0 < self.relaxation <= 1):
            raise ValueError("relaxation must be in (0, 1]")
        if not (self.gap > 0 and self.t_final > 0 and self.macro_dt > 0):
            raise ValueError("gap, t_final and macro_dt must be positive")
        if self.kinetic_stepping not in ("explicit", "implicit"):
            raise ValueError("kinetic_stepping must be 'explicit' or 'implicit'")
        if self.start not in ("newtonian", "rest"):
            raise ValueError("start must be 'newtonian' or 'rest'")
        if not self.kinetic and self.stress_mode != "taylor0":
            raise ValueError("the reduced model supports stress_mode='taylor0' only")


@dataclass
class CoupledResult:
    profile: FieldProfile
    field: KineticField
    profiles: list
    snapshots: list
    history: list
    converged: bool
    mass_drift: float
    metadata: dict


def _kinetic_stress(field: KineticField, stress_mode: str, mode: str):
    """``(StressField at centres, cell-averaged d tau_s/dy or None, N)``."""
    g = field.grid
    if stress_mode == "wall_aware":
        N = marginal_density(field)
        ts = spring_stress(field, method="cell")
        factor = 1.0 if mode == "solvent" else 2.0
        tau = ts - factor * (N * g.params.kBT)[:, None, None] * np.eye(2)
        faces = spring_stress(field, face_positions(g), method="cell")
        return StressField(g.y, tau, N, g.params.kBT, ts), face_divergence(faces, g.dy), N
    if stress_mode == "homogeneous":
        st = stress_homogeneous(field, mode)
    else:
        st = stress_taylor(field, order=0 if stress_mode == "taylor0" else 2, mode=mode)
    return st, None, st.N


def _oldroyd_rhs(A, shear_rate, lam):
    K = np.zeros_like(A)
    K[:, 0, 1] = shear_rate
    return K @ A + A @ np.swapaxes(K, 1, 2) - (A - np.eye(2)) / lam


def _canonical(obj):
    if is_dataclass(obj):
        out = {"type": type(obj).__name__}
        out.update({k: _canonical(v) for k, v in asdict(obj).items()})
        return out
    if isinstance(obj, dict):
        return {k: _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def config_echo(config: CoupledConfig) -> dict:
    d = {k: _canonical(getattr(config, k)) for k in config.__dataclass_fields__}
    d["law"] = {"type": type(config.law).__name__, **asdict(config.law)}
    return d


def run_id(payload: dict) -> str:
    """Content hash of the canonical JSON payload (first 12 hex digits of SHA-1)."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(blob).hexdigest()[:12]


def coupled_solve(config: CoupledConfig, field: KineticField = None, callback=None) -> CoupledResult:
    """Operator-split coupling of the kinetic field and the solvent momentum.

    Each macro step: (1) Fokker-Planck steps (explicit, or one backward-Euler step) with the current
    velocity (``v_s`` in solvent mode, ``u`` in solution mode), (2) stress and
    bead density from the kinetic field, (3) mass check, (4) implicit solvent
    momentum step, (5) under-relaxed velocity update and new ``u, v_p, phi``.
    Stops at ``t_final`` or when the per-unit-time change falls below ``tol``.
    """
    config.validate()
    t_wall = time.perf_counter()
    p = config.params
    geom = Channel(config.gap)
    n = config.ny
    dy = config.gap / n
    y = (np.arange(n) + 0.5) * dy
    wall = config.forcing.wall_velocity

    if config.kinetic:
        grid = field.grid if field is not None else KineticGrid(geom, config.law, p, config.ny, config.nq,
                                                                 config.q_half)
        if grid.ny != n:
            raise ValueError("kinetic field resolution differs from config.ny")
        field = field if field is not None else equilibrium_field(grid, config.N0)
        mass0 = total_mass(field)
    else:
        if not isinstance(config.law, Hookean):
            raise ValueError("the reduced model uses the Oldroyd-B closure (Hookean springs)")
        grid, field = None, None
        N_red = np.full(n, float(config.N0))
        A = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
        mass0 = N_red.sum() * dy

    if config.start == "newtonian":
        vx = steady_streamwise_velocity(config.gap, n, p, config.forcing)
    else:
        vx = np.zeros(n)
    vs = np.stack([vx, np.zeros(n)], -1)

    def diagnose(field_, vs_, t_):
        if config.kinetic:
            tau, sdiv, N = _kinetic_stress(field_, config.stress_mode, config.mode)
        else:
            N = N_red
            factor = 1.0 if config.mode == "solvent" else 2.0
            ts = N[:, None, None] * p.kBT * A
            tau_arr = ts - factor * (N * p.kBT)[:, None, None] * np.eye(2)
            tau, sdiv = StressField(y, tau_arr, N, p.kBT, ts), None
        phi = N * p.V_d
        if np.any(phi >= 1):
            raise ValueError("volume fraction reached 1")
        dec = total_polymer_force(tau, N, config.mode, phi, dy, spring_divergence=sdiv)
        return tau, N, phi, dec.f

    tau, N, phi, f = diagnose(field, vs, 0.0)
    vs[:, 1] = wall_normal_solvent_velocity(f, p)
    prof = FieldProfile(y, N, phi, vs, vs + f / (2 * p.zeta * N)[:, None], vs.copy(), np.zeros(n),
                        N * p.kBT, N * p.kBT, tau.tau, f, 0.0)
    prof.u = phi[:, None] * prof.vp + (1 - phi)[:, None] * prof.vs

    profiles, snapshots, history = [prof], [], []
    H = getattr(config.law, "H", 1.0)
    v_unit = math.sqrt(p.kBT / H) * 4 * H / p.zeta
    t, step = 0.0, 0
    converged = False
    ref = None
    while t < config.t_final - 1e-12:
        dt = min(config.macro_dt, config.t_final - t)
        carrier = prof.vs if config.mode == "solvent" else prof.u
        flow = TabulatedFlow(y, carrier[:, 0], carrier[:, 1], gap=config.gap, wall_vx=wall)
        old_vx = prof.vs[:, 0].copy()
        if config.kinetic:
            op = FokkerPlanckOperator(grid, p, flow, mode=config.velocity_mode)
            old_psi = field.psi
            if config.kinetic_stepping == "implicit":
                field = op.implicit_step(field, dt)
            else:
                sub = max(1, int(math.ceil(dt / (0.9 * op.dt_max))))
                h = dt / sub
                for _ in range(sub):
                    field = op.step(field, h)
            psi_change = float(np.linalg.norm(field.psi - old_psi) / (np.linalg.norm(field.psi) * dt))
        else:
            ext = _wall_values(carrier[:, 0], wall)
            rate = np.gradient(ext, np.concatenate([[0.0], y, [config.gap]]))[1:-1]
            lam = p.zeta / (4 * config.law.H)
            sub = max(1, int(math.ceil(dt / (0.05 * lam))))
            h = dt / sub
            A_old = A.copy()
            for _ in range(sub):
                k1 = _oldroyd_rhs(A, rate, lam)
                k2 = _oldroyd_rhs(A + 0.5 * h * k1, rate, lam)
                A = A + h * k2
            bound = density_stability_bound(prof.vs, dy, p)
            nsub = max(1, int(math.ceil(dt / (0.9 * bound))))
            tau_now = N_red[:, None, None] * p.kBT * (A - np.eye(2))
            for _ in range(nsub):
                N_red = density_step(N_red, prof.vs, tau_now, dt / nsub, p, dy)
            psi_change = float(np.linalg.norm(A - A_old) / (np.linalg.norm(A) * dt))

        tau, N, phi, f = diagnose(field, prof.vs, t + dt)
        mass = total_mass(field) if config.kinetic else N_red.sum() * dy
        if not np.isfinite(mass) or np.any(N < -1e-12 * N.max()):
            raise ConvergenceError("density became invalid", history)
        base = FieldProfile(y, N, phi, prof.vs, prof.vp, prof.u, prof.p_s, prof.p_p, prof.p, tau.tau, f, t)
        new = solvent_momentum_step(base, dt, p, config.gap, config.mode, config.forcing, force=f)
        w = config.relaxation
        vs_new = new.vs.copy()
        vs_new[:, 0] = old_vx + w * (new.vs[:, 0] - old_vx)
        with np.errstate(divide="ignore", invalid="ignore"):
            vp = vs_new + f / (2 * p.zeta * N)[:, None]
        u = phi[:, None] * vp + (1 - phi)[:, None] * vs_new
        prof = FieldProfile(y, N, phi, vs_new, vp, u, new.p_s, new.p_p, new.p, tau.tau, f, t + dt)
        t += dt
        step += 1

        # floor: the molecular velocity scale l0 / lambda_H
        scale = max(float(np.max(np.abs(vs_new[:, 0]))), v_unit)
        v_change = float(np.max(np.abs(vs_new[:, 0] - old_vx)) / (scale * dt))
        change = max(v_change, psi_change)
        entry = {"t": t, "velocity_change": v_change, "kinetic_change": psi_change,
                 "mass_drift": abs(mass / mass0 - 1), "u_identity": prof.u_identity_residual()}
        history.append(entry)
        if not np.isfinite(change):
            raise ConvergenceError("coupled iteration produced non-finite values", history)
        if ref is None:
            ref = change
        if change > config.divergence_limit * max(ref, 1e-300):
            raise ConvergenceError("coupled iteration diverged", history)
        if config.profile_every and step % config.profile_every == 0:
            profiles.append(prof)
        if config.kinetic and config.snapshot_every and step % config.snapshot_every == 0:
            snapshots.append(field.copy())
        if callback is not None:
            callback(step, prof, field)
        if change < config.tol:
            converged = True
            break

    if profiles[-1] is not prof:
        profiles.append(prof)
    mass = total_mass(field) if config.kinetic else N_red.sum() * dy
    echo = config_echo(config)
    meta = {
        "config": echo,
        "run_id": run_id(echo),
        "steps": step,
        "converged": converged,
        "wall_clock_s": time.perf_counter() - t_wall,
        "residual_history": history,
    }
    return CoupledResult(prof, field, profiles, snapshots, history, converged, abs(mass / mass0 - 1), meta)


# -------------------------------------------------------------------- I/O


def write_profiles_csv(path, profiles):
    """Profile time series with a units comment line."""
    rows = []
    for pr in profiles:
        rows.append(np.column_stack([np.full(pr.y.size, pr.t), pr.y, pr.N, pr.phi, pr.vs[:, 0], pr.vp[:, 0],
                                     pr.u[:, 0], pr.tau[:, 0, 0], pr.tau[:, 0, 1], pr.tau[:, 1, 1], pr.p_p]))
    data = np.vstack(rows)
    with open(path, "w", newline="") as fh:
        fh.write("# units: t [s], y [m], N [1/m^2], phi [-], velocities [m/s], tau_* [Pa], p_p [Pa]\n")
        fh.write(",".join(PROFILE_COLUMNS) + "\n")
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")


def write_metadata_json(path, metadata: dict):
    with open(path, "w") as fh:
        json.dump(metadata, fh, indent=2, sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if is_dataclass(obj):
        return _canonical(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")
