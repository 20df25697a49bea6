"""Polymer stress and force calculators on a kinetic field.

The spring part of the wall-aware stress is

    tau_s(y) = int_{-1/2}^{1/2} int psi~(y + s qy, q) q (x) F(q) dq ds,

where ``psi~`` vanishes whenever the dumbbell does not fit in the domain.
The full stress subtracts ``N kBT`` (fluid surrounding the beads is the
solvent) or ``2 N kBT`` (surrounding fluid is the solution).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Channel
from .inertialess import KineticField, box_deposit, center_density, marginal_density


@dataclass
class StressField:
    """Per-point stress tensors with their companion scalars."""

    y: np.ndarray
    tau: np.ndarray          # (n, 2, 2)
    N: np.ndarray            # bead number density
    kBT: float
    tau_spring: np.ndarray = None

    @property
    def p_p(self) -> np.ndarray:
        return self.N * self.kBT

    def components(self):
        return self.tau[:, 0, 0], self.tau[:, 0, 1], self.tau[:, 1, 1]


def _tensor_weights(grid):
    """``q_a F_b dq`` on the connector grid, shape ``(3, nqx, nqy)`` for xx, xy, yy."""
    qm = grid.qmask
    T = np.stack([grid.QX * grid.Fx, grid.QX * grid.Fy, grid.QY * grid.Fy]) * grid.dq
    return np.where(qm[None], T, 0.0)


def _to_tensor(c):
    xx, xy, yy = c[..., 0], c[..., 1], c[..., 2]
    return np.stack([np.stack([xx, xy], -1), np.stack([xy, yy], -1)], -2)


def _ghost_filled(field: KineticField) -> np.ndarray:
    """Extend each ``(qx, qy)`` column beyond its admissible y-range by its edge value."""
    g = field.grid
    if not isinstance(g.geom, Channel):
        return field.psi
    admissible = g.mask.any(axis=1)  # (ny, nqy)
    j = np.arange(g.ny)[:, None]
    first = np.where(admissible.any(0), np.argmax(admissible, axis=0), 0)
    last = np.where(admissible.any(0), g.ny - 1 - np.argmax(admissible[::-1], axis=0), -1)
    idx = np.clip(j, first[None], np.maximum(last, first)[None])  # (ny, nqy)
    out = np.take_along_axis(field.psi, idx[:, None, :].repeat(g.nqx, axis=1), axis=0)
    return np.where(admissible.any(0)[None, None, :], out, 0.0)


def interpolate_psi(field: KineticField, ypts: np.ndarray, ext=None) -> np.ndarray:
    """Linear-in-y interpolation of ``psi`` at points ``ypts[e, k]`` for column ``qy[k]``.

    Returns ``(ne, nqx, nqy)``; zero where the dumbbell does not fit.
    """
    g = field.grid
    psi = _ghost_filled(field) if ext is None else ext
    ypts = np.asarray(ypts, dtype=float)
    if not g.has_y:
        return np.broadcast_to(psi[0], (ypts.shape[0], g.nqx, g.nqy))
    f = ypts / g.dy - 0.5
    i0 = np.floor(f).astype(int)
    w = (f - i0)[:, None, :]
    i1 = i0 + 1
    if g.periodic:
        i0 %= g.ny
        i1 %= g.ny
    else:
        i0 = np.clip(i0, 0, g.ny - 1)
        i1 = np.clip(i1, 0, g.ny - 1)
    kk = np.arange(g.nqy)[None, None, :]
    ii = np.arange(g.nqx)[None, :, None]
    val = (1 - w) * psi[i0[:, None, :], ii, kk] + w * psi[i1[:, None, :], ii, kk]
    if isinstance(g.geom, Channel):
        half = 0.5 * np.abs(g.qy)[None, :]
        fits = (ypts > half) & (ypts < g.geom.gap - half)
        val = val * fits[:, None, :]
    return val


def _column_antiderivative(psi, dy):
    """Cumulative integral at the nodes of the piecewise-linear, end-constant interpolant."""
    c = np.empty_like(psi)
    c[0] = 0.5 * dy * psi[0]
    c[1:] = c[0] + np.cumsum(0.5 * dy * (psi[1:] + psi[:-1]), axis=0)
    return c


def _eval_antiderivative(C, psi, dy, pts):
    """Evaluate the antiderivative at ``pts[e, k]`` for every qx; shape ``(ne, nqx, nqy)``."""
    ny = psi.shape[0]
    f = pts / dy - 0.5
    j = np.clip(np.floor(f).astype(int), -1, ny - 1)
    kk = np.arange(psi.shape[2])[None, None, :]
    ii = np.arange(psi.shape[1])[None, :, None]
    jc = np.clip(j, 0, ny - 1)[:, None, :]
    jn = np.clip(j + 1, 0, ny - 1)[:, None, :]
    t = (pts - (j + 0.5) * dy)[:, None, :]
    p0 = psi[jc, ii, kk]
    p1 = psi[jn, ii, kk]
    inner = C[jc, ii, kk] + p0 * t + (p1 - p0) * t * t / (2 * dy)
    below = psi[0][None] * pts[:, None, :]
    above = C[-1][None] + psi[-1][None] * (pts[:, None, :] - (ny - 0.5) * dy)
    jb = j[:, None, :]
    return np.where(jb < 0, below, np.where(jb >= ny - 1, above, inner))


def spring_stress(field: KineticField, y_eval=None, s_nodes: int = 8, method: str = "gauss") -> np.ndarray:
    """Spring part ``tau_s`` at ``y_eval`` (default: cell centres), shape ``(n, 2, 2)``.

    Methods
    -------
    gauss : Gauss-Legendre in ``s`` with ``s_nodes`` points and linear interpolation.
    segment : exact ``s``-integral of the piecewise-linear interpolant.
    cell : exact ``s``-integral with each cell's value spread over its
        territory; pairs exactly with :func:`cell_spring_force` and
        :func:`~dumbbellflow.inertialess.marginal_density`.
    fourier : periodic box only, exact for the trigonometric interpolant.
    """
    g = field.grid
    T = _tensor_weights(g)
    y_eval = g.y if y_eval is None else np.asarray(y_eval, dtype=float)
    if not g.has_y:
        vals = np.einsum("ik,cik->c", field.psi[0], T)
        return _to_tensor(np.broadcast_to(vals, (y_eval.size, 3)))
    if method == "fourier":
        if not g.periodic:
            raise ValueError("fourier s-integration needs a periodic box")
        if y_eval is not g.y and not np.array_equal(y_eval, g.y):
            raise ValueError("fourier s-integration evaluates at cell centres only")
        k = 2 * np.pi * np.fft.fftfreq(g.ny, d=g.dy)
        hat = np.fft.fft(field.psi, axis=0)
        filt = np.sinc(k[:, None, None] * g.qy[None, None, :] / (2 * np.pi))
        avg = np.fft.ifft(hat * filt, axis=0).real
        return _to_tensor(np.einsum("jik,cik->jc", avg, T))
    if method == "cell":
        A = np.einsum("jik,cik->jkc", field.psi, T)
        return _to_tensor(_window_average(g, A, y_eval))
    ext = _ghost_filled(field)
    if method == "gauss":
        x, w = np.polynomial.legendre.leggauss(int(s_nodes))
        acc = np.zeros((y_eval.size, 3))
        for s, ws in zip(0.5 * x, 0.5 * w):
            pts = y_eval[:, None] + s * g.qy[None, :]
            val = interpolate_psi(field, pts, ext)
            acc += ws * np.einsum("eik,cik->ec", val, T)
        return _to_tensor(acc)
    if method == "segment":
        if g.periodic:
            raise ValueError("segment s-integration is implemented for channels; use fourier")
        C = _column_antiderivative(ext, g.dy)
        half = 0.5 * np.abs(g.qy)[None, :]
        L = g.geom.gap
        lo = np.maximum(y_eval[:, None] - half, half)
        hi = np.minimum(y_eval[:, None] + half, L - half)
        lo_c = np.minimum(lo, hi)
        integral = _eval_antiderivative(C, ext, g.dy, hi) - _eval_antiderivative(C, ext, g.dy, lo_c)
        width = 2 * half
        small = width < 1e-14
        avg = np.where(small[:, None, :], 0.0, integral / np.where(small, 1.0, width)[:, None, :])
        if np.any(small):
            avg = avg + np.where(small[:, None, :], interpolate_psi(field, y_eval[:, None] + 0 * g.qy, ext), 0.0)
        return _to_tensor(np.einsum("eik,cik->ec", avg, T))
    raise ValueError(f"unknown s-integration method {method!r}")


def _window_average(grid, A, y_eval, chunk=64):
    """``sum_k (1/|qy_k|) int_{y-|qy_k|/2}^{y+|qy_k|/2} A_k(c) dc`` for territory-constant ``A``.

    ``A`` has shape ``(ny, nqy, nc)``; the ``qy = 0`` column takes the point value
    (the mean of both sides on a territory edge).
    """
    half = 0.5 * np.maximum(np.abs(grid.qy), 1e-9 * grid.dy)
    lo_t, hi_t = grid.territory
    if grid.periodic:
        span = int(math.ceil((half.max() + grid.dy) / grid.length)) + 1
        offsets = np.arange(-span, span + 1) * grid.length
    else:
        offsets = np.zeros(1)
    out = np.zeros((y_eval.size, A.shape[-1]))
    for start in range(0, y_eval.size, chunk):
        ye = y_eval[start:start + chunk]
        for off in offsets:
            a = ye[:, None, None] - half[None, None, :] + off
            b = ye[:, None, None] + half[None, None, :] + off
            ov = np.clip(np.minimum(b, hi_t[None]) - np.maximum(a, lo_t[None]), 0.0, None)
            out[start:start + chunk] += np.einsum("ejk,jkc->ec", ov / (2 * half)[None, None, :], A)
    return out


def cell_spring_force(field: KineticField) -> np.ndarray:
    """Cell-averaged bead-pair spring force density, shape ``(ny, 2)``.

    Each cell's ``F psi`` is spread over its territory and moved to the two
    bead positions with opposite signs.
    """
    g = field.grid
    if not g.has_y:
        return np.zeros((g.ny, 2))
    out = np.zeros((g.ny, 2))
    for b, F in enumerate((g.Fx, g.Fy)):
        W = (field.psi * g.weight * np.where(g.qmask, F, 0.0)[None]).sum(axis=1) * g.dq * g.dy
        out[:, b] = (box_deposit(g, W, -0.5 * g.qy) - box_deposit(g, W, 0.5 * g.qy)) / g.dy
    return out


def face_positions(grid) -> np.ndarray:
    """y-coordinates of the cell faces (``ny + 1`` in a channel, ``ny`` in a periodic box)."""
    n = grid.ny if grid.periodic else grid.ny + 1
    return np.arange(n) * grid.dy


def face_divergence(tau_faces: np.ndarray, dy: float, periodic: bool = False) -> np.ndarray:
    """Cell-averaged ``d tau_yb / dy`` from face values; shape ``(ny, 2)``."""
    t = np.asarray(tau_faces)[:, 1, :]
    if periodic:
        return (np.roll(t, -1, axis=0) - t) / dy
    return np.diff(t, axis=0) / dy


def bead_density_at(field: KineticField, y_eval) -> np.ndarray:
    """Interpolated bead density ``1/2 int [psi~(y+qy/2) + psi~(y-qy/2)] dq`` at ``y_eval``."""
    g = field.grid
    y_eval = np.asarray(y_eval, dtype=float)
    if not g.has_y:
        return np.full(y_eval.size, center_density(field)[0])
    ext = _ghost_filled(field)
    total = 0.0
    for sign in (-0.5, 0.5):
        total = total + interpolate_psi(field, y_eval[:, None] + sign * g.qy[None, :], ext)
    return 0.5 * total.sum(axis=(1, 2)) * g.dq


def _subtract_isotropic(tau_s, N, kBT, mode):
    factor = {"solvent": 1.0, "solution": 2.0}[mode]
    return tau_s - factor * (N * kBT)[:, None, None] * np.eye(2)


def stress_wall_aware(field: KineticField, geom=None, law=None, s_nodes: int = 8,
                      method: str = "gauss", mode: str = "solvent", y_eval=None) -> StressField:
    """Wall-aware stress ``tau_s - N kBT delta`` (``2 N kBT`` in solution mode).

    ``N`` is the bead density: :func:`marginal_density` at cell centres,
    its interpolated form elsewhere.
    """
    g = field.grid
    if geom is not None and geom != g.geom:
        raise ValueError("geometry differs from the field's grid")
    if law is not None and law != g.law:
        raise ValueError("spring law differs from the field's grid")
    y = g.y if y_eval is None else np.asarray(y_eval, dtype=float)
    ts = spring_stress(field, y, s_nodes, method)
    N = marginal_density(field) if y_eval is None else bead_density_at(field, y)
    return StressField(y, _subtract_isotropic(ts, N, g.params.kBT, mode), N, g.params.kBT, ts)


def stress_homogeneous(field: KineticField, mode: str = "solvent") -> StressField:
    """Local Kramers form ``<q F> - N kBT delta`` with the per-cell centre density."""
    g = field.grid
    T = _tensor_weights(g)
    ts = _to_tensor(np.einsum("jik,cik->jc", field.psi, T))
    N = center_density(field)
    return StressField(g.y, _subtract_isotropic(ts, N, g.params.kBT, mode), N, g.params.kBT, ts)


def second_derivative_y(field: KineticField, spectral=None) -> np.ndarray:
    """``d^2 psi / dy^2``: spectral in a periodic box, else 2nd-order differences."""
    g = field.grid
    psi = field.psi
    if not g.has_y:
        return np.zeros_like(psi)
    if spectral is None:
        spectral = g.periodic
    if spectral:
        k = 2 * np.pi * np.fft.fftfreq(g.ny, d=g.dy)
        return np.fft.ifft(-(k**2)[:, None, None] * np.fft.fft(psi, axis=0), axis=0).real
    if g.periodic:
        return (np.roll(psi, -1, 0) - 2 * psi + np.roll(psi, 1, 0)) / g.dy**2
    d2 = np.empty_like(psi)
    d2[1:-1] = (psi[2:] - 2 * psi[1:-1] + psi[:-2]) / g.dy**2
    d2[0] = (2 * psi[0] - 5 * psi[1] + 4 * psi[2] - psi[3]) / g.dy**2
    d2[-1] = (2 * psi[-1] - 5 * psi[-2] + 4 * psi[-3] - psi[-4]) / g.dy**2
    return d2


def stress_taylor(field: KineticField, order: int = 0, mode: str = "solvent", spectral=None) -> StressField:
    """Kramers term plus, for ``order=2``, ``(1/24) int q F (q . grad)^2 psi dq``."""
    if order not in (0, 2):
        raise ValueError("order must be 0 or 2")
    g = field.grid
    T = _tensor_weights(g)
    ts = np.einsum("jik,cik->jc", field.psi, T)
    if order == 2:
        d2 = second_derivative_y(field, spectral)
        ts = ts + np.einsum("jik,cik->jc", d2 * g.QY[None] ** 2, T) / 24.0
    ts = _to_tensor(ts)
    N = marginal_density(field)
    return StressField(g.y, _subtract_isotropic(ts, N, g.params.kBT, mode), N, g.params.kBT, ts)


# ------------------------------------------------------------------ forces


def derivative_y(values: np.ndarray, dy: float, periodic: bool = False) -> np.ndarray:
    """First y-derivative along axis 0: central inside, one-sided 2nd order at walls."""
    v = np.asarray(values, dtype=float)
    if periodic:
        return (np.roll(v, -1, 0) - np.roll(v, 1, 0)) / (2 * dy)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2 * dy)
    out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * dy)
    out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * dy)
    return out


def divergence(tau: np.ndarray, dy: float, periodic: bool = False) -> np.ndarray:
    """``(div tau)_b = d tau_yb / dy`` for y-only fields; shape ``(n, 2)``."""
    return derivative_y(tau[:, 1, :], dy, periodic)


def thermal_force(N_profile, dy: float, kBT: float, periodic: bool = False) -> np.ndarray:
    """``f_t = -2 kBT grad N`` as ``(n, 2)`` vectors."""
    f = np.zeros((len(N_profile), 2))
    f[:, 1] = -2.0 * kBT * derivative_y(N_profile, dy, periodic)
    return f


@dataclass
class ForceDecomposition:
    f: np.ndarray
    f_spring: np.ndarray
    f_thermal: np.ndarray


def total_polymer_force(tau: StressField, N_profile, mode: str = "solvent", phi_profile=None,
                        dy: float = None, periodic: bool = False,
                        spring_divergence=None) -> ForceDecomposition:
    """Polymer force density.

    ``solvent``: ``f = div tau - grad p_p``. ``solution``: ``f = div tau / (1 - phi)``
    with the stress that subtracts ``2 N kBT``. ``spring_divergence`` replaces
    the differenced ``div tau_s`` (e.g. cell averages from face values).
    """
    if dy is None:
        dy = float(tau.y[1] - tau.y[0])
    N = np.asarray(N_profile, dtype=float)
    ft = thermal_force(N, dy, tau.kBT, periodic)
    factor = {"solvent": 1.0, "solution": 2.0}.get(mode)
    if factor is None:
        raise ValueError(f"unknown mode {mode!r}")
    if spring_divergence is not None:
        fs = np.asarray(spring_divergence, dtype=float)
    else:
        # spring part: div(tau + factor N kBT delta); thermal part: -2 kBT grad N
        fs = divergence(tau.tau, dy, periodic) - factor * ft / 2.0
    if mode == "solvent":
        return ForceDecomposition(fs + ft, fs, ft)
    phi = np.zeros_like(N) if phi_profile is None else np.asarray(phi_profile, dtype=float)
    if np.any(phi >= 1):
        raise ValueError("volume fraction reached 1")
    return ForceDecomposition((fs + ft) / (1 - phi)[:, None], fs, ft)


def direct_spring_force(field: KineticField, y_eval=None) -> np.ndarray:
    """Bead-pair spring force density ``int F [psi~(y+qy/2) - psi~(y-qy/2)] dq``, shape ``(n, 2)``."""
    g = field.grid
    y_eval = g.y if y_eval is None else np.asarray(y_eval, dtype=float)
    if not g.has_y:
        return np.zeros((y_eval.size, 2))
    ext = _ghost_filled(field)
    up = interpolate_psi(field, y_eval[:, None] + 0.5 * g.qy[None, :], ext)
    dn = interpolate_psi(field, y_eval[:, None] - 0.5 * g.qy[None, :], ext)
    diff = up - dn
    Fx = np.where(g.qmask, g.Fx, 0.0) * g.dq
    Fy = np.where(g.qmask, g.Fy, 0.0) * g.dq
    return np.stack([np.einsum("eik,ik->e", diff, Fx), np.einsum("eik,ik->e", diff, Fy)], -1)


def weak_identity_residual(field: KineticField, geom=None, law=None, g=None, n_gauss: int = 4,
                           refine: int = 4, method: str = "segment") -> float:
    """``|int f_s . g + int tau_s : grad g| / (||tau_s|| ||grad g||)`` on the channel.

    ``g`` is a callable returning ``(g(y), g'(y))``, each of shape ``(n, 2)``.
    Integrals use ``n_gauss`` Gauss points on each of ``refine * ny`` panels.
    """
    grid = field.grid
    if g is None:
        raise ValueError("a test function is required")
    L = grid.length
    panels = refine * grid.ny
    x, w = np.polynomial.legendre.leggauss(n_gauss)
    h = L / panels
    left = np.arange(panels)[:, None] * h
    ys = (left + 0.5 * h * (x[None] + 1)).ravel()
    ws = np.tile(0.5 * h * w, panels)
    gv, dg = g(ys)
    gv, dg = np.asarray(gv), np.asarray(dg)
    if not np.any(gv) and not np.any(dg):
        return 0.0
    fs = direct_spring_force(field, ys)
    ts = spring_stress(field, ys, method=method)
    lhs = np.sum(ws * np.einsum("eb,eb->e", fs, gv))
    rhs = np.sum(ws * np.einsum("eb,eb->e", ts[:, 1, :], dg))
    norm_t = np.sqrt(np.sum(ws * np.sum(ts**2, axis=(1, 2))))
    norm_g = np.sqrt(np.sum(ws * np.sum(dg**2, axis=1)))
    return float(abs(lhs + rhs) / (norm_t * norm_g))


# --------------------------------------------------------------------- I/O


def write_stress_csv(path, stress: StressField):
    xx, xy, yy = stress.components()
    data = np.column_stack([stress.y, xx, xy, yy, stress.p_p, stress.N])
    with open(path, "w", newline="") as fh:
        fh.write("# units: y [m], tau_* [Pa], p_p [Pa], N [1/m^2]\n")
        fh.write("y,tau_xx,tau_xy,tau_yy,p_p,N\n")
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")


def wall_extrapolate(values: np.ndarray) -> tuple:
    """Second-order one-sided extrapolation of cell-centre values to both wall faces.

    Returns ``(bottom, top)`` with the trailing shape of ``values``.
    """
    v = np.asarray(values, dtype=float)
    if v.shape[0] < 3:
        raise ValueError("need at least three cells")
    bottom = (15 * v[0] - 10 * v[1] + 3 * v[2]) / 8
    top = (15 * v[-1] - 10 * v[-2] + 3 * v[-3]) / 8
    return bottom, top


def wall_stress_ratio(field: KineticField, method: str = "cell") -> float:
    """``|tau_wall + N kBT delta| / (N kBT)`` at the walls, from extrapolated centre values.

    The exact spring stress vanishes on a wall; the ratio measures how well
    the interior solution approaches that limit. Frobenius norm, larger wall.
    """
    g = field.grid
    if not isinstance(g.geom, Channel):
        raise ValueError("wall stress needs a channel")
    ts = spring_stress(field, method=method)
    N = marginal_density(field)
    out = 0.0
    for t_w, n_w in zip(wall_extrapolate(ts), wall_extrapolate(N)):
        out = max(out, float(np.linalg.norm(t_w) / (n_w * g.params.kBT)))
    return out
