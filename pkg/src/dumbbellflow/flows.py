"""Imposed velocity fields that vary along the wall-normal coordinate only.

Every flow is ``v(y) = (v_x(y), v_y(y))``; evaluating at a position array
``r`` uses ``r[..., 1]`` and pads the remaining components with zeros.
Arguments are never wrapped, so simple shear works in an unwrapped box.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ProfileFlow:
    """Base class; subclasses implement ``profile(y) -> (vx, vy)``."""

    def profile(self, y):
        raise NotImplementedError

    def derivative(self, y, n: int):
        """``n``-th y-derivative of ``(vx, vy)``; finite differences by default."""
        y = np.asarray(y, dtype=float)
        h = 1e-3
        if n == 0:
            return self.profile(y)
        lo = self.derivative(y - h, n - 1)
        hi = self.derivative(y + h, n - 1)
        return tuple((b - a) / (2 * h) for a, b in zip(lo, hi))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        vx, vy = self.profile(r[..., 1])
        out = np.zeros_like(r)
        out[..., 0] = vx
        out[..., 1] = vy
        return out


@dataclass(frozen=True)
class ZeroFlow(ProfileFlow):
    def profile(self, y):
        z = np.zeros(np.shape(y))
        return z, z.copy()

    def derivative(self, y, n):
        return self.profile(y)


@dataclass(frozen=True)
class ShearFlow(ProfileFlow):
    """Simple shear ``v_x = rate * (y - y0)``."""

    rate: float
    y0: float = 0.0

    def profile(self, y):
        y = np.asarray(y, dtype=float)
        return self.rate * (y - self.y0), np.zeros_like(y)

    def derivative(self, y, n):
        y = np.asarray(y, dtype=float)
        if n == 0:
            return self.profile(y)
        val = self.rate if n == 1 else 0.0
        return np.full_like(y, val), np.zeros_like(y)


@dataclass(frozen=True)
class CouetteFlow(ProfileFlow):
    gap: float
    u_top: float
    u_bottom: float = 0.0

    def profile(self, y):
        y = np.asarray(y, dtype=float)
        return self.u_bottom + (self.u_top - self.u_bottom) * y / self.gap, np.zeros_like(y)

    def derivative(self, y, n):
        y = np.asarray(y, dtype=float)
        if n == 0:
            return self.profile(y)
        val = (self.u_top - self.u_bottom) / self.gap if n == 1 else 0.0
        return np.full_like(y, val), np.zeros_like(y)


@dataclass(frozen=True)
class PoiseuilleFlow(ProfileFlow):
    """Plane Poiseuille profile with centreline speed ``vmax``."""

    gap: float
    vmax: float

    def profile(self, y):
        y = np.asarray(y, dtype=float)
        return 4.0 * self.vmax * y * (self.gap - y) / self.gap**2, np.zeros_like(y)

    def derivative(self, y, n):
        y = np.asarray(y, dtype=float)
        c = 4.0 * self.vmax / self.gap**2
        z = np.zeros_like(y)
        if n == 0:
            return self.profile(y)
        if n == 1:
            return c * (self.gap - 2 * y), z
        if n == 2:
            return np.full_like(y, -2 * c), z
        return z, z.copy()


@dataclass(frozen=True)
class PolynomialFlow(ProfileFlow):
    """``v_x = sum_k coeffs[k] * y**k`` (``v_y = 0``)."""

    coeffs: tuple

    def profile(self, y):
        y = np.asarray(y, dtype=float)
        return np.polynomial.polynomial.polyval(y, self.coeffs), np.zeros_like(y)

    def derivative(self, y, n):
        y = np.asarray(y, dtype=float)
        c = np.polynomial.polynomial.polyder(self.coeffs, n) if n else self.coeffs
        return np.polynomial.polynomial.polyval(y, c) * np.ones_like(y), np.zeros_like(y)


@dataclass(frozen=True)
class KolmogorovFlow(ProfileFlow):
    """Periodic ``v_x = U sin(2 pi y / wavelength)``."""

    U: float
    wavelength: float

    def profile(self, y):
        y = np.asarray(y, dtype=float)
        return self.U * np.sin(2 * np.pi * y / self.wavelength), np.zeros_like(y)

    def derivative(self, y, n):
        y = np.asarray(y, dtype=float)
        k = 2 * np.pi / self.wavelength
        return self.U * k**n * np.sin(k * y + n * np.pi / 2), np.zeros_like(y)


class TabulatedFlow(ProfileFlow):
    """Piecewise-linear profile through cell-centre values plus wall values.

    Used by the coupled solver to hand the current solvent (or mixture)
    velocity to the kinetic solvers.
    """

    def __init__(self, y_centers, vx, vy=None, gap=None, wall_vx=(0.0, 0.0), periodic=False):
        self.yc = np.asarray(y_centers, dtype=float)
        self.vx = np.asarray(vx, dtype=float)
        self.vy = np.zeros_like(self.vx) if vy is None else np.asarray(vy, dtype=float)
        self.periodic = periodic
        self.gap = gap
        if periodic:
            self._nodes = None
        else:
            g = float(gap)
            self._nodes = np.concatenate([[0.0], self.yc, [g]])
            self._vx = np.concatenate([[wall_vx[0]], self.vx, [wall_vx[1]]])
            self._vy = np.concatenate([[0.0], self.vy, [0.0]])

    def profile(self, y):
        y = np.asarray(y, dtype=float)
        if self.periodic:
            period = float(self.gap)
            return (np.interp(y, self.yc, self.vx, period=period),
                    np.interp(y, self.yc, self.vy, period=period))
        return np.interp(y, self._nodes, self._vx), np.interp(y, self._nodes, self._vy)
