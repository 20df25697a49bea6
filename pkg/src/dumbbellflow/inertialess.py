"""Inertialess polymer phase: configuration-space Fokker-Planck solver and SDE.

The kinetic field is stored on a ``(y, qx, qy)`` grid (``d = 2``); fields vary
only along the wall-normal coordinate ``y``. The conservative update is

    dpsi/dt = div_q( Dq grad_q psi + (2F/zeta) psi + (v1 - v2) psi )
            + div_x( Dx grad_x psi - (v1 + v2)/2 psi ),

with ``Dq = 2 kBT / zeta``, ``Dx = kBT / (2 zeta)`` and ``v1, v2`` the imposed
velocity at the beads ``x -/+ q/2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .core import (
    FENE,
    Channel,
    DomainError,
    FreeSpace,
    Hookean,
    PeriodicBox,
    PhysicalParams,
    force_magnitude_ratio,
    in_configuration_set,
    spring_force,
)
from .rng import CounterRNG


class StabilityError(RuntimeError):
    """Explicit step exceeds the stability bound; ``term`` names the culprit."""

    def __init__(self, message, term, dt_max):
        super().__init__(message)
        self.term = term
        self.dt_max = dt_max


class ConvergenceError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


MODES = {
    "exact": "exact",
    "exact_bead_velocity": "exact",
    "truncated_order2": "truncated2",
    "truncated2": "truncated2",
    "truncated_order0": "truncated0",
    "truncated0": "truncated0",
}


# ------------------------------------------------------------------- grid


class KineticGrid:
    """Cell-centred ``(y, qx, qy)`` grid with the admissibility mask.

    Parameters
    ----------
    geom : Channel, PeriodicBox or FreeSpace
        ``FreeSpace`` uses a single homogeneous y-cell.
    law : Hookean or FENE
    params : PhysicalParams
    ny, nq : int
        Cells along ``y`` and per connector axis.
    q_half : float, optional
        Half-width of the square connector box. Defaults to ``6 ell0`` for
        Hookean springs and ``q0 (1 - 1e-6)`` for FENE.
    align_qy : bool
        In a channel, place ``qy`` on multiples of ``dy / k`` (``k`` odd,
        ``qy = 0`` included) and clip the range to the gap, so that every wall
        cell carries admissible connectors.

    Attributes
    ----------
    territory : ndarray, shape (2, ny, nqy)
        Centre-coordinate interval each cell stands for. In a channel the end
        cells of every ``qy`` column are cut or stretched to the exact support
        ``|qy|/2 < y < L - |qy|/2``.
    theta : ndarray, shape (ny, nqy)
        Territory length over ``dy``; cell mass is ``theta * psi * dy * dq``.
    """

    def __init__(self, geom, law, params: PhysicalParams, ny=64, nq=64, q_half=None, align_qy=True):
        if params.dim != 2:
            raise ValueError("the kinetic grid solver supports dim=2 only")
        self.geom, self.law, self.params = geom, law, params
        kT = params.kBT
        if q_half is None:
            q_half = law.q0 * (1 - 1e-6) if isinstance(law, FENE) else 6.0 * math.sqrt(kT / law.H)
        self.q_half = float(q_half)

        if isinstance(geom, FreeSpace):
            ny = 1
            self.dy = 1.0
            self.y = np.zeros(1)
            self.periodic = False
            self.has_y = False
        else:
            length = geom.gap if isinstance(geom, Channel) else geom.side
            self.dy = length / ny
            self.y = (np.arange(ny) + 0.5) * self.dy
            self.periodic = isinstance(geom, PeriodicBox)
            self.has_y = True
        self.ny = ny

        self.dqx = 2 * self.q_half / nq
        self.qx = -self.q_half + (np.arange(nq) + 0.5) * self.dqx
        qy_half = self.q_half
        if isinstance(geom, Channel) and align_qy:
            # qy on integer multiples of dy/k with k odd: bead positions y_j +- qy/2 fall
            # on cell centres or faces, never strictly between
            qy_half = min(self.q_half, geom.gap)
            k = max(1, math.ceil(self.dy * nq / (2 * qy_half)))
            k += 1 - k % 2
            self.dqy = self.dy / k
            m = math.ceil(qy_half / self.dqy - 1e-9)
            self.qy = np.arange(-m, m + 1) * self.dqy
        else:
            self.dqy = self.dqx
            self.qy = self.qx.copy()
        self.nqx, self.nqy = self.qx.size, self.qy.size
        self.dq = self.dqx * self.dqy

        QX, QY = np.meshgrid(self.qx, self.qy, indexing="ij")
        self.QX, self.QY = QX, QY
        self.q2 = QX**2 + QY**2
        qmask = np.asarray(law.admissible(self.q2))
        if isinstance(law, FENE):
            qmask &= self.q2 < (law.q0 * (1 - 1e-6)) ** 2
        self.qmask = qmask
        with np.errstate(over="ignore", invalid="ignore"):
            U = np.asarray(law.potential(self.q2), dtype=float) / kT
        self.U = np.where(qmask, U, np.inf)
        ratio = np.where(qmask, force_magnitude_ratio(np.where(qmask, self.q2, 0.0), law), 0.0)
        self.Fx, self.Fy = ratio * QX, ratio * QY

        if isinstance(geom, Channel):
            # closed test: cells whose centre dumbbell touches a wall are half inside
            # the admissible wedge and are kept
            tol = 1e-9 * self.dy
            reach = 0.5 * np.abs(self.qy)[None, :]
            fits = (self.y[:, None] - reach >= -tol) & (self.y[:, None] + reach <= geom.gap + tol)
            self.territory, fits = _territories(self.y, self.dy, reach[0], geom.gap - reach[0], fits)
            self.theta = (self.territory[1] - self.territory[0]) / self.dy
            self.mask = fits[:, None, :] & qmask[None, :, :]
        else:
            self.mask = np.broadcast_to(qmask, (ny, self.nqx, self.nqy)).copy()
            lo = np.broadcast_to((self.y - 0.5 * self.dy)[:, None], (ny, self.nqy))
            self.territory = np.stack([lo, lo + self.dy])
            self.theta = np.ones((ny, self.nqy))
        self.theta = np.where(self.mask.any(axis=1), self.theta, 0.0)
        self.weight = self.theta[:, None, :]
        self.cell_volume = self.dy * self.dq

    @property
    def shape(self):
        return (self.ny, self.nqx, self.nqy)

    @property
    def length(self):
        if isinstance(self.geom, Channel):
            return self.geom.gap
        if isinstance(self.geom, PeriodicBox):
            return self.geom.side
        return 1.0


def _territories(y, dy, lo, hi, fits, min_fraction=0.25):
    """Centre-coordinate interval represented by each admissible cell of each ``qy`` column.

    Interior cells cover their own extent; the first and last admissible cells
    of a column stretch or shrink to the support ends ``lo``, ``hi`` so that the
    territories tile the support exactly. Columns whose support is shorter than
    ``min_fraction * dy`` are dropped.
    """
    fits = fits.copy()
    any_ = fits.any(axis=0)
    first = np.argmax(fits, axis=0)
    last = fits.shape[0] - 1 - np.argmax(fits[::-1], axis=0)
    j = np.arange(fits.shape[0])[:, None]
    t_lo = np.where(j == first[None], lo[None], (y - 0.5 * dy)[:, None])
    t_hi = np.where(j == last[None], hi[None], (y + 0.5 * dy)[:, None])
    short = any_ & (hi - lo < min_fraction * dy)
    fits &= ~short[None]
    t_lo = np.where(fits, t_lo, 0.0)
    t_hi = np.where(fits, t_hi, 0.0)
    return np.stack([t_lo, t_hi]), fits


@dataclass
class KineticField:
    """``psi[j, i, k]`` at ``(y_j, qx_i, qy_k)``, zero outside the mask."""

    grid: KineticGrid
    psi: np.ndarray
    t: float = 0.0
    positivity_violations: int = 0

    def copy(self, psi=None, t=None) -> "KineticField":
        return KineticField(self.grid, self.psi.copy() if psi is None else psi,
                            self.t if t is None else t, self.positivity_violations)


def equilibrium_field(grid: KineticGrid, N0: float = 1.0) -> KineticField:
    """Boltzmann weight restricted to admissible cells.

    Normalised so that the mean bead density over the domain equals ``N0``.
    This is an exact stationary state of the discrete operator at ``v = 0``.
    """
    w = np.where(grid.mask, np.exp(-np.where(grid.mask, grid.U, 0.0)), 0.0)
    total = (w * grid.weight).sum() * grid.cell_volume
    psi = w * (N0 * grid.length / total) if grid.has_y else w * (N0 / (w.sum() * grid.dq))
    return KineticField(grid, psi)


def gaussian_field(grid: KineticGrid, cov, N0: float = 1.0) -> KineticField:
    """``N0`` times a normalised Gaussian in ``q`` (uniform in ``y``), masked."""
    cov = np.asarray(cov, dtype=float)
    inv = np.linalg.inv(cov)
    quad = inv[0, 0] * grid.QX**2 + 2 * inv[0, 1] * grid.QX * grid.QY + inv[1, 1] * grid.QY**2
    g = np.exp(-0.5 * quad) / (2 * np.pi * math.sqrt(np.linalg.det(cov)))
    psi = np.where(grid.mask, N0 * g[None], 0.0)
    return KineticField(grid, psi)


def center_density(field: KineticField) -> np.ndarray:
    """Centre-of-mass density ``int psi(y, q) dq`` per y-cell (cell mass over ``dy``)."""
    return (field.psi * field.grid.weight).sum(axis=(1, 2)) * field.grid.dq


def box_deposit(grid, weights: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """Spread ``weights[j, k]`` uniformly over cell ``(j, k)``'s territory shifted by ``shift[k]``.

    Returns the amount landing in each y-cell, shape ``(ny,)``. Periodic boxes
    wrap; in a channel the shifted territories stay inside ``[0, L]``.
    """
    lo = grid.territory[0] + shift[None, :]
    hi = grid.territory[1] + shift[None, :]
    width = np.where(hi > lo, hi - lo, 1.0)
    L = grid.length
    out = np.zeros(grid.ny + 1)
    if grid.periodic:
        span = int(math.ceil((np.abs(shift).max() + grid.dy) / L)) + 1
        offsets = np.arange(-span, span + 1) * L
    else:
        offsets = np.zeros(1)
    faces = np.arange(grid.ny + 1) * grid.dy
    for off in offsets:
        x = faces[:, None, None] + off
        G = np.clip((x - lo[None]) / width[None], 0.0, 1.0)
        out += np.einsum("fjk,jk->f", G, weights)
    return np.diff(out)


def marginal_density(field: KineticField) -> np.ndarray:
    """Bead number density ``N(y) = 1/2 int [psi(y + qy/2, q) + psi(y - qy/2, q)] dq``.

    Cell averages over each y-cell. Every cell's mass is spread uniformly over
    its territory, and half of it is moved to each bead position, so
    ``sum(N) dy`` equals the total mass exactly. In free space (single
    homogeneous cell) this is ``int psi dq``.
    """
    g = field.grid
    if not g.has_y:
        return center_density(field)
    mass = (field.psi * g.weight).sum(axis=1) * g.dq * g.dy  # (ny, nqy)
    out = box_deposit(g, 0.5 * mass, -0.5 * g.qy) + box_deposit(g, 0.5 * mass, 0.5 * g.qy)
    return out / g.dy


def total_mass(field: KineticField) -> float:
    """``int psi dq dy`` (per unit length in the homogeneous directions)."""
    return float((field.psi * field.grid.weight).sum() * field.grid.cell_volume)


def second_moments(field: KineticField) -> np.ndarray:
    """``<q q>`` per y-cell, shape ``(ny, 2, 2)``; NaN where the cell is empty."""
    g = field.grid
    psi = field.psi * g.weight
    n = psi.sum(axis=(1, 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        xx = (psi * g.QX**2).sum(axis=(1, 2)) / n
        xy = (psi * g.QX * g.QY).sum(axis=(1, 2)) / n
        yy = (psi * g.QY**2).sum(axis=(1, 2)) / n
    return np.stack([np.stack([xx, xy], -1), np.stack([xy, yy], -1)], -2)


# --------------------------------------------------------------- operator


def _bernoulli(x):
    """``B(x) = x / (exp(x) - 1)`` with its series near 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-5
    xs = np.where(small, 1.0, x)
    big = xs / np.expm1(np.clip(xs, -700, 700))
    return np.where(small, 1.0 - 0.5 * x + x * x / 12.0, big)


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _velocity_differences(grid, flow, mode):
    """Relative bead velocity ``w = v2 - v1`` and centre velocity ``uy``.

    Returns callables evaluated at (y, qy) broadcast arrays.
    """
    def w_components(y, qy):
        if mode == "exact":
            vx2, vy2 = flow.profile(y + qy / 2)
            vx1, vy1 = flow.profile(y - qy / 2)
            return vx2 - vx1, vy2 - vy1
        d1 = flow.derivative(y, 1)
        wx, wy = qy * d1[0], qy * d1[1]
        if mode == "truncated2":
            d3 = flow.derivative(y, 3)
            wx = wx + qy**3 * d3[0] / 24.0
            wy = wy + qy**3 * d3[1] / 24.0
        return wx, wy

    def uy(y, qy):
        if mode == "exact":
            return 0.5 * (flow.profile(y + qy / 2)[1] + flow.profile(y - qy / 2)[1])
        u = flow.profile(y)[1]
        if mode == "truncated2":
            u = u + qy**2 * flow.derivative(y, 2)[1] / 8.0
        return u

    return w_components, uy


DIRECT_LIMIT = 50_000


class FokkerPlanckOperator:
    """Explicit conservative operator for a fixed velocity field.

    Parameters
    ----------
    grid : KineticGrid
    params : PhysicalParams
    flow : ProfileFlow or None
    mode : str
        ``exact`` (bead velocities) or ``truncated_order2`` / ``truncated_order0``.
    scheme : {"sg", "muscl"}
        ``sg`` uses exponentially fitted (Scharfetter-Gummel) fluxes, which
        keep the discrete Boltzmann state exactly stationary. ``muscl`` is
        central diffusion plus minmod-limited upwind advection.
    include_q, include_x : bool
        Switch off connector-space or position-space transport.
    """

    def __init__(self, grid: KineticGrid, params: PhysicalParams, flow=None, mode="exact",
                 scheme="sg", include_q=True, include_x=True):
        if mode not in MODES:
            raise ValueError(f"unknown velocity mode {mode!r}")
        if scheme not in ("sg", "muscl"):
            raise ValueError(f"unknown scheme {scheme!r}")
        from .flows import ZeroFlow

        self.grid, self.params = grid, params
        self.mode, self.scheme = MODES[mode], scheme
        self.flow = ZeroFlow() if flow is None else flow
        kT, zeta = params.kBT, params.zeta
        self.Dq = 2 * kT / zeta
        self.Dx = kT / (2 * zeta)
        g = grid
        mask = g.mask
        wfun, ufun = _velocity_differences(g, self.flow, self.mode)
        Y = g.y[:, None, None]
        QY = g.qy[None, None, :]
        self.faces = []  # (axis, aL, aR, drift, h, D) per direction
        bounds = {"q-diffusion": np.inf, "x-diffusion": np.inf, "advection CFL": np.inf}

        if include_q:
            # qx faces: between qx[i] and qx[i+1]
            wx, _ = wfun(Y, QY)
            wx = np.broadcast_to(wx, (g.ny, 1, g.nqy))
            qxf = 0.5 * (g.qx[1:] + g.qx[:-1])
            with np.errstate(invalid="ignore"):
                dU = (g.U[1:, :] - g.U[:-1, :])[None]
            open_ = mask[:, 1:, :] & mask[:, :-1, :]
            Fxf = self._face_force(qxf[:, None], g.qy[None, :], axis=0)
            self._add_faces(1, dU, wx, -2.0 * Fxf[None] / zeta, g.dqx, self.Dq, open_)
            # qy faces
            qyf = 0.5 * (g.qy[1:] + g.qy[:-1])
            _, wy = wfun(Y, qyf[None, None, :])
            wy = np.broadcast_to(wy, (g.ny, 1, g.nqy - 1))
            with np.errstate(invalid="ignore"):
                dU = (g.U[:, 1:] - g.U[:, :-1])[None]
            open_ = mask[:, :, 1:] & mask[:, :, :-1]
            Fyf = self._face_force(g.qx[:, None], qyf[None, :], axis=1)
            self._add_faces(2, dU, wy, -2.0 * Fyf[None] / zeta, g.dqy, self.Dq, open_)
            bounds["q-diffusion"] = 1.0 / (2 * self.Dq * (1 / g.dqx**2 + 1 / g.dqy**2))
        if include_x and g.has_y:
            if g.periodic:
                yf = (np.arange(g.ny) + 1.0) * g.dy
                open_ = mask & np.roll(mask, -1, axis=0)
            else:
                yf = (np.arange(g.ny - 1) + 1.0) * g.dy
                open_ = mask[1:] & mask[:-1]
            uy = np.broadcast_to(ufun(yf[:, None, None], QY), (yf.size, 1, g.nqy))
            self._add_faces(0, None, uy, 0.0, g.dy, self.Dx, open_)
            bounds["x-diffusion"] = 1.0 / (2 * self.Dx / g.dy**2)

        rate = np.zeros(g.shape)
        adv = 0.0
        for ax, aL, aR, drift, h, D, open_ in self.faces:
            if self.scheme == "sg":
                outL, outR = aL, aR
            else:
                outL = outR = np.where(open_, 2 * D / h**2 + 2 * np.abs(drift) / h, 0.0)
            self._scatter_add(rate, ax, outL, outR)
            adv = max(adv, float(np.max(np.abs(np.where(open_, drift, 0.0)) / h, initial=0.0)))
        # small territories hold less mass and empty faster
        inv_theta = np.where(g.weight > 0, 1.0 / np.where(g.weight > 0, g.weight, 1.0), 0.0)
        self.inv_theta = np.broadcast_to(inv_theta, g.shape)
        rate = rate * self.inv_theta
        theta_min = float(g.weight[g.weight > 0].min()) if np.any(g.weight > 0) else 1.0
        bounds["advection CFL"] = theta_min / adv if adv > 0 else np.inf
        for key in ("q-diffusion", "x-diffusion"):
            bounds[key] *= theta_min
        self.bounds = bounds
        self.dt_max = 1.0 / rate.max() if rate.max() > 0 else np.inf

    def _face_force(self, qx, qy, axis):
        q2 = qx**2 + qy**2
        law = self.grid.law
        ok = np.asarray(law.admissible(q2))
        ratio = np.where(ok, force_magnitude_ratio(np.where(ok, q2, 0.0), law), 0.0)
        return ratio * (qx if axis == 0 else qy)

    def _add_faces(self, ax, dU, w, spring, h, D, open_):
        """Store face coefficients; ``w`` is the flow drift, ``spring`` the spring drift."""
        drift = np.where(open_, np.broadcast_to(w + spring, open_.shape), 0.0)
        if self.scheme == "sg":
            P = np.broadcast_to(w, open_.shape) * h / D
            if dU is not None:
                jump = np.where(open_, np.broadcast_to(dU, open_.shape), 0.0)
                P = P - jump
            P = np.where(open_, P, 0.0)
            aL = np.where(open_, D / h**2 * _bernoulli(-P), 0.0)
            aR = np.where(open_, D / h**2 * _bernoulli(P), 0.0)
        else:
            aL = aR = None
        self.faces.append((ax, aL, aR, drift, h, D, open_))

    def _scatter_add(self, out, ax, left, right):
        """Add face quantities to the left/right neighbour cells."""
        g = self.grid
        if ax == 0 and g.periodic:
            out += left
            out += np.roll(right, 1, axis=0)
            return
        sl_l = [slice(None)] * 3
        sl_r = [slice(None)] * 3
        sl_l[ax] = slice(0, -1)
        sl_r[ax] = slice(1, None)
        out[tuple(sl_l)] += left
        out[tuple(sl_r)] += right

    def rhs(self, psi: np.ndarray) -> np.ndarray:
        out = np.zeros_like(psi)
        g = self.grid
        for ax, aL, aR, drift, h, D, open_ in self.faces:
            periodic = ax == 0 and g.periodic
            if periodic:
                pL, pR = psi, np.roll(psi, -1, axis=0)
            else:
                sl_l = [slice(None)] * 3
                sl_r = [slice(None)] * 3
                sl_l[ax] = slice(0, -1)
                sl_r[ax] = slice(1, None)
                pL, pR = psi[tuple(sl_l)], psi[tuple(sl_r)]
            if self.scheme == "sg":
                flux = aL * pL - aR * pR
            else:
                flux = self._muscl_flux(psi, ax, pL, pR, drift, h, D, open_, periodic)
            self._scatter_add(out, ax, -flux, flux)
        return out * self.inv_theta

    def _muscl_flux(self, psi, ax, pL, pR, drift, h, D, open_, periodic):
        if periodic:
            fwd = np.roll(psi, -1, axis=ax) - psi
            bwd = psi - np.roll(psi, 1, axis=ax)
            slope = _minmod(bwd, fwd)
            sL, sR = slope, np.roll(slope, -1, axis=ax)
        else:
            d = np.diff(psi, axis=ax)
            pad = [(0, 0)] * 3
            pad[ax] = (1, 1)
            d = np.pad(d, pad)
            sl_a = [slice(None)] * 3
            sl_b = [slice(None)] * 3
            sl_a[ax] = slice(0, -1)
            sl_b[ax] = slice(1, None)
            slope = _minmod(d[tuple(sl_a)], d[tuple(sl_b)])
            sl_l = [slice(None)] * 3
            sl_r = [slice(None)] * 3
            sl_l[ax] = slice(0, -1)
            sl_r[ax] = slice(1, None)
            sL, sR = slope[tuple(sl_l)], slope[tuple(sl_r)]
        up = np.where(drift > 0, pL + 0.5 * sL, pR - 0.5 * sR)
        flux = (D / h**2) * (pL - pR) + drift * up / h
        return np.where(open_, flux, 0.0)

    def matrix(self):
        """Sparse matrix of :meth:`rhs` (Scharfetter-Gummel scheme only)."""
        if self.scheme != "sg":
            raise ValueError("a matrix exists for the linear sg scheme only")
        from scipy import sparse

        g = self.grid
        idx = np.arange(np.prod(g.shape)).reshape(g.shape)
        rows, cols, vals = [], [], []
        for ax, aL, aR, drift, h, D, open_ in self.faces:
            if ax == 0 and g.periodic:
                iL, iR = idx, np.roll(idx, -1, axis=0)
            else:
                sl_l = [slice(None)] * 3
                sl_r = [slice(None)] * 3
                sl_l[ax] = slice(0, -1)
                sl_r[ax] = slice(1, None)
                iL, iR = idx[tuple(sl_l)], idx[tuple(sl_r)]
            sel = open_
            l, r, a, b = iL[sel], iR[sel], aL[sel], aR[sel]
            # flux = a psi_L - b psi_R leaves L and enters R
            rows += [l, l, r, r]
            cols += [l, r, l, r]
            vals += [-a, b, a, -b]
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals) * self.inv_theta.ravel()[rows]
        n = idx.size
        return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def _implicit_system(self, dt):
        from scipy import sparse
        from scipy.sparse.linalg import LinearOperator, spilu, splu

        A = self.matrix()
        active = (self.inv_theta > 0).ravel() & self.grid.mask.ravel()
        # inactive cells decouple and stay at zero
        A = A - sparse.diags((~active).astype(float))
        M = (sparse.identity(A.shape[0]) / dt - A).tocsc()
        if A.shape[0] <= DIRECT_LIMIT:
            lu = splu(M)
            return A, M, None, lu.solve
        ilu = spilu(M, drop_tol=1e-4, fill_factor=10)
        return A, M, LinearOperator(M.shape, ilu.solve), None

    def _implicit_update(self, psi, system, rtol):
        from scipy.sparse.linalg import gmres

        A, M, P, direct = system
        r = A @ psi
        if direct is not None:
            return psi + direct(r)
        d, info = gmres(M, r, M=P, rtol=rtol, atol=0.0, restart=60, maxiter=100)
        if info != 0:
            raise ConvergenceError(f"implicit Fokker-Planck solve did not converge (info={info})", [])
        return psi + d

    def implicit_step(self, field: KineticField, dt: float, rtol: float = 1e-12) -> KineticField:
        """Backward-Euler step; unconditionally stable and mass conserving."""
        psi = self._implicit_update(field.psi.ravel(), self._implicit_system(dt), rtol)
        return field.copy(psi=psi.reshape(self.grid.shape), t=field.t + dt)

    def steady_state(self, psi0: np.ndarray, tol: float = 1e-10, dt: float = None,
                     max_iter: int = 60) -> tuple[np.ndarray, list]:
        """Steady state reached by large backward-Euler pseudo-time steps from ``psi0``.

        Mass is that of ``psi0``. Convergence is ``||A psi|| / ||psi|| < tol``.
        Returns the state and the residual history.
        """
        psi = np.asarray(psi0, dtype=float).ravel().copy()
        if dt is None:
            dt = 1e4 if psi.size <= DIRECT_LIMIT else 300.0
        system = self._implicit_system(dt)
        A = system[0]
        norm = np.linalg.norm(psi)
        weights = np.broadcast_to(self.grid.weight, self.grid.shape).ravel()
        mass = weights @ psi
        history = []
        for _ in range(max_iter):
            res = float(np.linalg.norm(A @ psi) / norm)
            history.append(res)
            if res < tol:
                return psi.reshape(self.grid.shape), history
            psi = self._implicit_update(psi, system, rtol=1e-6)
            # iterative solves conserve mass only to their tolerance
            psi *= mass / (weights @ psi)
        raise ConvergenceError(f"steady Fokker-Planck solve stalled at residual {history[-1]:.3e}",
                               history)

    def limiting_term(self) -> str:
        return min(self.bounds, key=self.bounds.get)

    def step(self, field: KineticField, dt: float) -> KineticField:
        if not dt > 0:
            raise ValueError("dt must be positive")
        if dt > self.dt_max * (1 + 1e-12):
            term = self.limiting_term()
            raise StabilityError(
                f"dt={dt:.3e} exceeds the stability bound {self.dt_max:.3e}; limited by {term}",
                term, self.dt_max)
        new = field.psi + dt * self.rhs(field.psi)
        out = field.copy(psi=new, t=field.t + dt)
        if new.min() < -1e-12 * max(new.max(), 0.0):
            out.positivity_violations += 1
        return out


def fp_step(psi: KineticField, dt: float, v_field, params: PhysicalParams, law=None,
            mode: str = "exact", scheme: str = "sg") -> KineticField:
    """Advance the kinetic field by one explicit conservative step."""
    if law is not None and law != psi.grid.law:
        raise ValueError("spring law differs from the one the grid was built with")
    op = FokkerPlanckOperator(psi.grid, params, v_field, mode=mode, scheme=scheme)
    return op.step(psi, dt)


@dataclass
class SteadyResult:
    field: KineticField
    steps: int
    time: float
    history: list = dc_field(default_factory=list)


def fp_steady(psi0: KineticField, v_field, params: PhysicalParams, law=None, tol: float = 1e-8,
              mode: str = "exact", scheme: str = "sg", dt=None, max_steps: int = 200_000,
              check_every: int = 50, operator: FokkerPlanckOperator | None = None) -> SteadyResult:
    """Time-march to steady state.

    Stops once ``||psi_new - psi_old|| / (||psi|| * elapsed) < tol`` over a
    block of ``check_every`` steps.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if law is not None and law != psi0.grid.law:
        raise ValueError("spring law differs from the one the grid was built with")
    op = operator or FokkerPlanckOperator(psi0.grid, params, v_field, mode=mode, scheme=scheme)
    dt = 0.9 * op.dt_max if dt is None else dt
    field = psi0
    history = []
    steps = 0
    while steps < max_steps:
        old = field.psi
        for _ in range(check_every):
            field = op.step(field, dt)
        steps += check_every
        change = np.linalg.norm(field.psi - old) / (np.linalg.norm(field.psi) * dt * check_every)
        history.append(float(change))
        if change < tol:
            return SteadyResult(field, steps, steps * dt, history)
    raise ConvergenceError(f"no steady state after {steps} steps (last change {history[-1]:.3e})",
                           history)


# ------------------------------------------------------------------- I/O


def write_field_csv(path, field: KineticField, only_support: bool = True):
    """CSV with columns ``y,qx,qy,psi`` preceded by a units comment line."""
    g = field.grid
    Y, QX, QY = np.meshgrid(g.y, g.qx, g.qy, indexing="ij")
    sel = g.mask if only_support else np.ones(g.shape, bool)
    data = np.column_stack([Y[sel], QX[sel], QY[sel], field.psi[sel]])
    with open(path, "w", newline="") as fh:
        fh.write(f"# units: y [m], qx [m], qy [m], psi [1/m^4]; t = {field.t!r} s\n")
        fh.write("y,qx,qy,psi\n")
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")


def save_field_npz(path, field: KineticField):
    g = field.grid
    np.savez_compressed(path, y=g.y, qx=g.qx, qy=g.qy, psi=field.psi, mask=g.mask, t=field.t)


def load_field_npz(path, grid: KineticGrid) -> KineticField:
    data = np.load(path)
    if data["psi"].shape != grid.shape or not np.allclose(data["qy"], grid.qy):
        raise ValueError("stored field does not match the grid")
    return KineticField(grid, data["psi"].copy(), float(data["t"]))


# ------------------------------------------------------------------- SDE


@dataclass
class EnsembleInertialess:
    """Centres of mass ``x`` and connectors ``q``, shape ``(n, d)``."""

    x: np.ndarray
    q: np.ndarray
    t: float = 0.0
    step: int = 0
    seed: int = 0
    ids: np.ndarray = None

    def __post_init__(self):
        if self.ids is None:
            self.ids = np.arange(len(self.x), dtype=np.uint64)
        self.rng = CounterRNG(self.seed, stream=1)

    @property
    def r1(self):
        return self.x - 0.5 * self.q

    @property
    def r2(self):
        return self.x + 0.5 * self.q


def sample_equilibrium_connectors(n, law, params, rng: np.random.Generator) -> np.ndarray:
    """Draw connectors from the Boltzmann density in ``d`` dimensions."""
    d = params.dim
    sd = math.sqrt(params.kBT / law.H)
    if isinstance(law, Hookean):
        return rng.normal(0.0, sd, size=(n, d))
    out = np.empty((0, d))
    b = law.b(params.kBT)
    while len(out) < n:
        # Gaussian proposal with the Hookean weight; accept with (1 - q^2/q0^2)^{b/2} e^{q^2/2 ell0^2}
        # bounded by 1 since log(1-u) <= -u.
        cand = rng.normal(0.0, sd, size=(2 * n, d))
        u2 = np.sum(cand**2, axis=1) / law.q0**2
        ok = u2 < 1
        logacc = np.full(len(cand), -np.inf)
        logacc[ok] = 0.5 * b * (np.log1p(-u2[ok]) + u2[ok])
        keep = np.log(rng.random(len(cand))) < logacc
        out = np.vstack([out, cand[keep]])
    return out[:n]


def initial_inertialess_ensemble(n, law, params, geom, seed=0) -> EnsembleInertialess:
    """Equilibrium ensemble: Boltzmann connectors, uniform centres, both beads inside."""
    rng = np.random.default_rng(seed)
    xs, qs = [], []
    need = n
    while need > 0:
        q = sample_equilibrium_connectors(2 * need, law, params, rng)
        x = np.zeros_like(q)
        if isinstance(geom, Channel):
            x[:, 1] = rng.uniform(0, geom.gap, len(q))
        elif isinstance(geom, PeriodicBox):
            x[:, 1] = rng.uniform(0, geom.side, len(q))
        ok = in_configuration_set(x, q, 0.0, geom)
        xs.append(x[ok][:need])
        qs.append(q[ok][:need])
        need -= len(xs[-1])
    return EnsembleInertialess(np.vstack(xs), np.vstack(qs), seed=seed)


def _fene_semi_implicit(qexp, law, c):
    """Solve ``l (1 + c / (1 - l^2/q0^2)) = R`` for the new connector length."""
    R = np.linalg.norm(qexp, axis=-1)
    q0 = law.q0
    lo = np.zeros_like(R)
    hi = np.minimum(R, q0 * (1 - 1e-12))
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        val = mid * (1 + c / (1 - (mid / q0) ** 2)) - R
        lo = np.where(val < 0, mid, lo)
        hi = np.where(val < 0, hi, mid)
    length = 0.5 * (lo + hi)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(R > 0, length / R, 0.0)
    return qexp * scale[..., None]


def reflect_into(r, geom):
    """Specular reflection of positions across channel walls (in place copy)."""
    if not isinstance(geom, Channel):
        return r
    r = r.copy()
    y = r[..., 1]
    L = geom.gap
    for _ in range(8):
        y = np.where(y < 0, -y, y)
        y = np.where(y > L, 2 * L - y, y)
        if np.all((y >= 0) & (y <= L)):
            break
    r[..., 1] = y
    return r


def step_inertialess_sde(ens: EnsembleInertialess, dt: float, v_field, params: PhysicalParams,
                         law, geom, noise=None) -> EnsembleInertialess:
    """Euler-Maruyama step of the centre/connector SDE.

    ``noise`` may supply per-bead normals of shape ``(n, 2, d)``; by default
    they come from the ensemble's counter-based generator, so the inertial
    solver can reuse the same increments.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    n, d = ens.x.shape
    zeta, kT = params.zeta, params.kBT
    if noise is None:
        xi = ens.rng.normals(ens.step, ens.ids, 2 * d).reshape(n, 2, d)
    else:
        xi = noise
    xi_q = (xi[:, 1] - xi[:, 0]) / math.sqrt(2.0)
    xi_x = (xi[:, 0] + xi[:, 1]) / math.sqrt(2.0)
    v1 = v_field(ens.x - 0.5 * ens.q)
    v2 = v_field(ens.x + 0.5 * ens.q)
    x_new = ens.x + 0.5 * (v1 + v2) * dt + math.sqrt(kT * dt / zeta) * xi_x
    explicit = ens.q + (v2 - v1) * dt + math.sqrt(4 * kT * dt / zeta) * xi_q
    if isinstance(law, FENE):
        q_new = _fene_semi_implicit(explicit, law, 2 * law.H * dt / zeta)
    else:
        q_new = explicit - 2.0 * spring_force(ens.q, law) * dt / zeta
    if isinstance(geom, Channel):
        r1 = reflect_into(x_new - 0.5 * q_new, geom)
        r2 = reflect_into(x_new + 0.5 * q_new, geom)
        x_new, q_new = 0.5 * (r1 + r2), r2 - r1
    if isinstance(law, FENE) and np.any(np.sum(q_new**2, -1) >= law.q0**2):
        raise DomainError("FENE connector left the admissible domain")
    out = EnsembleInertialess(x_new, q_new, ens.t + dt, ens.step + 1, ens.seed, ens.ids)
    return out
