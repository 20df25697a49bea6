"""Inertial bead-level dynamics and the ensemble estimators defined on them.

Each bead obeys ``m dV = (-zeta (V - v(r)) + F_i) dt + sqrt(2 zeta kBT) dW``
with ``F_1 = -F_2 = F(r2 - r1)``. Channel walls reflect specularly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import FENE, Channel, DomainError, PeriodicBox, PhysicalParams, force_magnitude_ratio
from .inertialess import initial_inertialess_ensemble
from .rng import CounterRNG


@dataclass
class EnsembleInertial:
    """Bead positions and velocities, each of shape ``(n, d)``."""

    r1: np.ndarray
    r2: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    t: float = 0.0
    step: int = 0
    seed: int = 0
    ids: np.ndarray = None
    reflections: int = 0

    def __post_init__(self):
        if self.ids is None:
            self.ids = np.arange(len(self.r1), dtype=np.uint64)
        self.rng = CounterRNG(self.seed, stream=0)

    @property
    def n(self) -> int:
        return len(self.r1)

    @property
    def q(self) -> np.ndarray:
        return self.r2 - self.r1

    def replace(self, **changes) -> "EnsembleInertial":
        d = dict(r1=self.r1, r2=self.r2, V1=self.V1, V2=self.V2, t=self.t, step=self.step,
                 seed=self.seed, ids=self.ids, reflections=self.reflections)
        d.update(changes)
        return EnsembleInertial(**d)


def initial_inertial_ensemble(n: int, law, params: PhysicalParams, geom, seed: int = 0,
                              v_field=None) -> EnsembleInertial:
    """Equilibrium configurations with Maxwellian velocities about ``v_field``."""
    base = initial_inertialess_ensemble(n, law, params, geom, seed=seed)
    rng = np.random.default_rng([seed, 7])
    sd = math.sqrt(params.kBT / params.mass)
    r1, r2 = base.r1, base.r2
    V1 = sd * rng.standard_normal(r1.shape)
    V2 = sd * rng.standard_normal(r2.shape)
    if v_field is not None:
        V1 = V1 + v_field(r1)
        V2 = V2 + v_field(r2)
    return EnsembleInertial(r1, r2, V1, V2, seed=seed)


def _spring(q, law):
    """Force on bead 1 and a mask of connectors outside the spring domain."""
    q2 = np.sum(q * q, axis=-1)
    if isinstance(law, FENE):
        bad = q2 >= law.q0**2
        ratio = force_magnitude_ratio(np.where(bad, 0.0, q2), law)
        return ratio[:, None] * q, bad
    return law.H * q, np.zeros(len(q), dtype=bool)


def _reflect(r, V, geom):
    """Specular reflection of positions and wall-normal velocities; returns count."""
    if not isinstance(geom, Channel):
        return r, V, 0
    L = geom.gap
    y, vy = r[:, 1].copy(), V[:, 1].copy()
    count = 0
    for _ in range(16):
        lo, hi = y < 0, y > L
        if not (lo.any() or hi.any()):
            break
        count += int(lo.sum() + hi.sum())
        y = np.where(lo, -y, np.where(hi, 2 * L - y, y))
        vy = np.where(lo | hi, -vy, vy)
    else:
        raise DomainError("reflection did not converge; time step too large for the gap")
    r = r.copy()
    V = V.copy()
    r[:, 1], V[:, 1] = y, vy
    return r, V, count


def _advance(r1, r2, V1, V2, xi, dt, v_field, params, law, geom, scheme):
    """One step for a subset; ``xi`` has shape ``(n, 2, d)``. Returns new arrays, bad mask, reflections."""
    m, zeta, kT = params.mass, params.zeta, params.kBT
    refl = 0
    if scheme == "em":
        F, bad = _spring(r2 - r1, law)
        amp = math.sqrt(2 * zeta * kT * dt) / m
        nV1 = V1 + dt / m * (-zeta * (V1 - v_field(r1)) + F) + amp * xi[:, 0]
        nV2 = V2 + dt / m * (-zeta * (V2 - v_field(r2)) - F) + amp * xi[:, 1]
        nr1, nV1, c1 = _reflect(r1 + V1 * dt, nV1, geom)
        nr2, nV2, c2 = _reflect(r2 + V2 * dt, nV2, geom)
        _, bad2 = _spring(nr2 - nr1, law)
        return nr1, nr2, nV1, nV2, bad | bad2, c1 + c2
    # BAOAB: half kick, half drift, exact OU about the local fluid velocity, half drift, half kick
    F, bad = _spring(r2 - r1, law)
    V1 = V1 + 0.5 * dt * F / m
    V2 = V2 - 0.5 * dt * F / m
    r1, V1, c = _reflect(r1 + 0.5 * dt * V1, V1, geom)
    refl += c
    r2, V2, c = _reflect(r2 + 0.5 * dt * V2, V2, geom)
    refl += c
    decay = math.exp(-zeta * dt / m)
    amp = math.sqrt(kT / m * (1 - decay**2))
    u1, u2 = v_field(r1), v_field(r2)
    V1 = u1 + decay * (V1 - u1) + amp * xi[:, 0]
    V2 = u2 + decay * (V2 - u2) + amp * xi[:, 1]
    r1, V1, c = _reflect(r1 + 0.5 * dt * V1, V1, geom)
    refl += c
    r2, V2, c = _reflect(r2 + 0.5 * dt * V2, V2, geom)
    refl += c
    F, bad2 = _spring(r2 - r1, law)
    V1 = V1 + 0.5 * dt * F / m
    V2 = V2 - 0.5 * dt * F / m
    return r1, r2, V1, V2, bad | bad2, refl


def step_inertial(ens: EnsembleInertial, dt: float, v_field, params: PhysicalParams, law, geom,
                  mode: str = "solvent", scheme: str = "baoab", max_retries: int = 8) -> EnsembleInertial:
    """Advance every particle by ``dt``.

    ``v_field`` is the velocity of the fluid surrounding the beads: the solvent
    velocity in ``mode="solvent"``, the mixture velocity in ``mode="solution"``.
    ``scheme="em"`` is plain Euler-Maruyama; the default ``baoab`` splitting
    integrates the friction/noise part exactly. FENE particles that overextend
    are redone with two half steps (recursively, up to ``max_retries`` levels).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if mode not in ("solvent", "solution"):
        raise ValueError(f"unknown mode {mode!r}")
    if scheme not in ("baoab", "em"):
        raise ValueError(f"unknown scheme {scheme!r}")
    d = ens.r1.shape[1]
    xi = ens.rng.normals(ens.step, ens.ids, 2 * d).reshape(ens.n, 2, d)
    out = list(_advance(ens.r1, ens.r2, ens.V1, ens.V2, xi, dt, v_field, params, law, geom, scheme))
    bad, refl = out[4], out[5]
    if bad.any():
        idx = np.flatnonzero(bad)
        sub = _retry(ens, idx, dt, v_field, params, law, geom, scheme, 1, max_retries, purpose=1)
        for k in range(4):
            out[k] = out[k].copy()
            out[k][idx] = sub[k]
        refl += sub[4]
    return ens.replace(r1=out[0], r2=out[1], V1=out[2], V2=out[3], t=ens.t + dt, step=ens.step + 1,
                       reflections=ens.reflections + refl)


def _retry(ens, idx, dt, v_field, params, law, geom, scheme, level, max_level, purpose):
    if level > max_level:
        raise DomainError(f"FENE overextension persists after {max_level} step halvings")
    d = ens.r1.shape[1]
    state = [ens.r1[idx], ens.r2[idx], ens.V1[idx], ens.V2[idx]]
    refl = 0
    h = dt / 2
    for sub in range(2):
        p = purpose * 4 + 2 * level + sub
        xi = ens.rng.normals(ens.step, ens.ids[idx], 2 * d, purpose=p).reshape(len(idx), 2, d)
        res = _advance(*state, xi, h, v_field, params, law, geom, scheme)
        if res[4].any():
            tmp = ens.replace(r1=state[0], r2=state[1], V1=state[2], V2=state[3], ids=ens.ids[idx])
            inner = np.flatnonzero(res[4])
            deeper = _retry(tmp, inner, h, v_field, params, law, geom, scheme, level + 1, max_level, p)
            res = [a.copy() for a in res[:4]] + [res[4], res[5] + deeper[4]]
            for k in range(4):
                res[k][inner] = deeper[k]
        state = list(res[:4])
        refl += res[5]
    return state + [refl]


def kinetic_temperature(ens: EnsembleInertial, params: PhysicalParams, v_field=None) -> float:
    """Ensemble mean of ``m |V - v(r)|^2 / d`` over both beads."""
    d = ens.r1.shape[1]
    c1, c2 = ens.V1, ens.V2
    if v_field is not None:
        c1, c2 = c1 - v_field(ens.r1), c2 - v_field(ens.r2)
    return float(params.mass * (np.sum(c1**2) + np.sum(c2**2)) / (2 * ens.n * d))


def write_snapshot_csv(path, ens: EnsembleInertial, append: bool = False):
    d = ens.r1.shape[1]
    axes = "xyz"[:d]
    cols = ["t", "particle_id"] + [f"{v}_{a}" for v in ("r1", "r2", "V1", "V2") for a in axes]
    data = np.column_stack([np.full(ens.n, ens.t), ens.ids.astype(float), ens.r1, ens.r2, ens.V1, ens.V2])
    with open(path, "a" if append else "w", newline="") as fh:
        if not append:
            fh.write("# units: t [s], r [m], V [m/s]\n")
            fh.write(",".join(cols) + "\n")
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")


# ------------------------------------------------------------ estimators


@dataclass(frozen=True)
class Bins:
    """Uniform bins along ``y``; ``transverse`` is the measure of the homogeneous directions."""

    edges: np.ndarray
    transverse: float = 1.0
    periodic: bool = False

    @classmethod
    def uniform(cls, length: float, n: int = 32, transverse: float = 1.0, periodic: bool = False):
        return cls(np.linspace(0.0, length, n + 1), transverse, periodic)

    @classmethod
    def for_geometry(cls, geom, n: int = 32, transverse: float = 1.0):
        if isinstance(geom, Channel):
            return cls.uniform(geom.gap, n, transverse)
        if isinstance(geom, PeriodicBox):
            return cls.uniform(geom.side, n, transverse, periodic=True)
        raise ValueError("binning needs a bounded wall-normal coordinate")

    @property
    def n(self) -> int:
        return len(self.edges) - 1

    @property
    def width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def length(self) -> float:
        return float(self.edges[-1] - self.edges[0])

    @property
    def volume(self) -> float:
        return self.width * self.transverse

    def index(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float) - self.edges[0]
        if self.periodic:
            y = np.mod(y, self.length)
        return np.clip((y / self.width).astype(int), 0, self.n - 1)


class ProfileAccumulator:
    """Per-batch bin sums of the linear bead statistics.

    Batches partition the particles by id (``id % n_batches``); sums from
    several snapshots add up, giving a time-and-ensemble average.
    """

    def __init__(self, bins: Bins, zeta: float, dim: int = 2, n_batches: int = 16):
        self.bins, self.zeta, self.dim, self.B = bins, zeta, dim, n_batches
        nb, d = bins.n, dim
        self.samples = 0
        self.count = np.zeros((n_batches, nb))
        self.mom = np.zeros((n_batches, nb, d))
        self.flux = np.zeros((n_batches, nb, d, d))
        self.fric = np.zeros((n_batches, nb, d))
        self.vs = np.zeros((n_batches, nb, d))
        self.tau = np.zeros((n_batches, nb, d, d))

    def _add(self, arr, batch, idx, values):
        flat = batch * self.bins.n + idx
        size = self.B * self.bins.n
        vals = values.reshape(len(idx), -1)
        for c in range(vals.shape[1]):
            arr.reshape(size, -1)[:, c] += np.bincount(flat, weights=vals[:, c], minlength=size)

    def add(self, ens: EnsembleInertial, v_s_field, params: PhysicalParams, law=None):
        batch = (ens.ids % np.uint64(self.B)).astype(int)
        for r, V in ((ens.r1, ens.V1), (ens.r2, ens.V2)):
            idx = self.bins.index(r[:, 1])
            vs = v_s_field(r)
            self._add(self.count, batch, idx, np.full(ens.n, 0.5))
            self._add(self.mom, batch, idx, 0.5 * V)
            self._add(self.flux, batch, idx, 0.5 * V[:, :, None] * V[:, None, :])
            self._add(self.fric, batch, idx, params.zeta * (V - vs))
            self._add(self.vs, batch, idx, 0.5 * vs)
        if law is not None:
            self.tau += spring_line_deposit(ens, self.bins, law, batch, self.B)
        self.samples += 1

    def profile(self, batches=None) -> "BinnedProfile":
        sel = slice(None) if batches is None else batches
        norm = self.samples * self.bins.volume
        cnt = self.count[sel].sum(0)
        with np.errstate(invalid="ignore", divide="ignore"):
            N = cnt / norm
            empty = cnt == 0
            vp = self.mom[sel].sum(0) / cnt[:, None]
            vs = self.vs[sel].sum(0) / cnt[:, None]
            second = self.flux[sel].sum(0) / cnt[:, None, None]
        var = second - vp[:, :, None] * vp[:, None, :]
        f_direct = self.fric[sel].sum(0) / norm
        f_friction = 2 * N[:, None] * self.zeta * (vp - vs)
        tau = self.tau[sel].sum(0) / norm
        for a in (vp, vs, var, f_friction):
            a[empty] = np.nan
        f_direct = np.where(empty[:, None], np.nan, f_direct)
        return BinnedProfile(self.bins, N, vp, vs, var, f_direct, f_friction, tau,
                             momentum_flux=self.flux[sel].sum(0) / norm, empty=empty)


@dataclass
class BinnedProfile:
    """Per-bin Monte Carlo estimates. ``NaN`` marks empty bins."""

    bins: Bins
    N: np.ndarray
    v_p: np.ndarray
    v_s: np.ndarray
    var_V: np.ndarray
    f_direct: np.ndarray
    f_friction: np.ndarray
    tau_s: np.ndarray
    momentum_flux: np.ndarray = None
    empty: np.ndarray = None


def estimate_profiles(ens: EnsembleInertial, bins: Bins, v_s_field, params: PhysicalParams,
                      law=None, n_batches: int = 16) -> BinnedProfile:
    """Single-snapshot bin estimates of ``N``, ``v_p``, ``Var(V)``, both force forms and ``tau_s``.

    The friction form ``2 N zeta (v_p - v_s)`` uses the bin mean of the solvent
    velocity sampled at the beads, which makes it identical to the direct sum.
    """
    if ens.n == 0:
        raise ValueError("empty ensemble")
    acc = ProfileAccumulator(bins, params.zeta, params.dim, n_batches)
    acc.add(ens, v_s_field, params, law)
    return acc.profile()


def spring_line_deposit(ens: EnsembleInertial, bins: Bins, law, batch=None, n_batches: int = 1) -> np.ndarray:
    """Sum of ``q F(q)`` spread uniformly along each segment ``r1 -> r2``, per batch and bin.

    Returns shape ``(n_batches, nbins, d, d)``; divide by ``bin volume`` (and the
    number of snapshots) for the density.
    """
    q = ens.q
    F, _ = _spring(q, law)
    qF = q[:, :, None] * F[:, None, :]
    y1, y2 = ens.r1[:, 1], ens.r2[:, 1]
    lo, hi = np.minimum(y1, y2), np.maximum(y1, y2)
    if bins.periodic:
        shift = np.floor((lo - bins.edges[0]) / bins.length) * bins.length
        lo, hi = lo - shift, hi - shift
    span = hi - lo
    e = bins.edges
    frac = np.zeros((len(q), bins.n))
    shifts = [0.0]
    if bins.periodic:
        maxwrap = int(np.ceil(np.max(hi - e[0], initial=0.0) / bins.length))
        shifts = [k * bins.length for k in range(maxwrap + 1)]
    point = span <= 1e-14 * max(bins.length, 1.0)
    safe = np.where(point, 1.0, span)
    for s in shifts:
        cum = np.clip((e[None, :] + s - lo[:, None]) / safe[:, None], 0.0, 1.0)
        frac += np.diff(cum, axis=1)
    if point.any():
        frac[point] = 0.0
        frac[point, bins.index(lo[point])] = 1.0
    if batch is None:
        batch = np.zeros(len(q), dtype=int)
    out = np.zeros((n_batches, bins.n) + qF.shape[1:])
    for b in range(n_batches):
        sel = batch == b
        out[b] = np.einsum("nk,nab->kab", frac[sel], qF[sel])
    return out


def estimate_spring_stress(ens: EnsembleInertial, bins: Bins, law) -> np.ndarray:
    """Line-deposited spring stress density per bin, shape ``(nbins, d, d)``."""
    return spring_line_deposit(ens, bins, law)[0] / bins.volume


# ------------------------------------------------------------- residual


def _spectral_dy(values, length):
    n = values.shape[0]
    k = 2 * np.pi * np.fft.fftfreq(n, d=length / n)
    shape = (-1,) + (1,) * (values.ndim - 1)
    return np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(values, axis=0), axis=0).real


def _fd_dy(values, dy):
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - values[:-2]) / (2 * dy)
    out[0] = (-3 * values[0] + 4 * values[1] - values[2]) / (2 * dy)
    out[-1] = (3 * values[-1] - 4 * values[-2] + values[-3]) / (2 * dy)
    return out


@dataclass
class MomentumResidual:
    residual: np.ndarray        # (nbins, d) pooled estimate
    stderr: np.ndarray          # (nbins, d) batch-means standard error
    batches: np.ndarray         # (B, nbins, d) per-batch estimates of the pooled residual
    terms: dict


def _residual_from(acc_list, times, params, form, sel):
    """Residual from a sequence of accumulators (time windows) for batch selection ``sel``."""
    profs = [a.profile(sel) for a in acc_list]
    bins = acc_list[0].bins
    m = params.mass
    mid = profs[len(profs) // 2] if len(profs) > 2 else profs[-1]
    avg = lambda name: np.mean([getattr(p, name) for p in profs], axis=0)
    deriv = (lambda v: _spectral_dy(v, bins.length)) if bins.periodic else (lambda v: _fd_dy(v, bins.width))
    N = avg("N")
    if len(profs) >= 2 and times[-1] > times[0]:
        dNv = (profs[-1].N[:, None] * profs[-1].v_p - profs[0].N[:, None] * profs[0].v_p) / (times[-1] - times[0])
        dv = (profs[-1].v_p - profs[0].v_p) / (times[-1] - times[0])
    else:
        dNv = np.zeros_like(mid.v_p)
        dv = np.zeros_like(mid.v_p)
    div_tau = deriv(avg("tau_s")[:, 1, :])
    if form == "conservative":
        inertia = 2 * m * (dNv + deriv(avg("momentum_flux")[:, 1, :]))
        friction = avg("f_direct")
        var_term = np.zeros_like(friction)
    else:
        vp = np.mean([p.v_p for p in profs], axis=0)
        inertia = 2 * m * N[:, None] * (dv + vp[:, 1:2] * deriv(vp))
        friction = avg("f_friction")
        var_term = 2 * m * deriv(N[:, None] * avg("var_V")[:, 1, :])
    res = inertia + friction - div_tau + var_term
    return res, {"inertia": inertia, "friction": friction, "div_tau_s": div_tau, "variance": var_term}


def momentum_residual(windows, params: PhysicalParams, times=None, form: str = "conservative") -> MomentumResidual:
    """Residual of the polymer momentum balance from time-window accumulators.

    ``windows`` is a list of :class:`ProfileAccumulator` (successive time
    windows with matching bins); ``times`` their centre times. ``form``
    ``"literal"`` evaluates ``rho_p phi Dv_p/Dt + 2 N zeta (v_p - v_s) - div tau_s
    + rho_p div(phi Var V)`` term by term; ``"conservative"`` uses the equivalent
    momentum-flux form ``2m [d(N v_p)/dt + div(N <V V>)] + f - div tau_s``,
    which is linear in the bead samples.
    """
    if not windows:
        raise ValueError("need at least one profile window")
    if form not in ("conservative", "literal"):
        raise ValueError(f"unknown form {form!r}")
    times = np.zeros(len(windows)) if times is None else np.asarray(times, dtype=float)
    res, terms = _residual_from(windows, times, params, form, None)
    B = windows[0].B
    # a batch holds 1/B of the particles and every term scales with the density,
    # so B times a batch residual estimates the pooled residual
    per = B * np.stack([_residual_from(windows, times, params, form, [b])[0] for b in range(B)])
    se = np.nanstd(per, axis=0, ddof=1) / math.sqrt(B)
    return MomentumResidual(res, se, per, terms)


def fourier_projection(profile: np.ndarray, length: float, mode: int = 1):
    """Cosine and sine projections ``(2/n) sum f(y_k) {cos, sin}(2 pi mode y_k / length)``."""
    n = profile.shape[0]
    y = (np.arange(n) + 0.5) * length / n
    c = np.cos(2 * np.pi * mode * y / length)
    s = np.sin(2 * np.pi * mode * y / length)
    shape = (-1,) + (1,) * (profile.ndim - 1)
    return (2.0 / n) * np.sum(profile * c.reshape(shape), 0), (2.0 / n) * np.sum(profile * s.reshape(shape), 0)
