"""Physical parameters, spring laws, geometry and nondimensional groups.

Conventions used throughout the package:

* ``q = r2 - r1`` is the connector, ``x = (r1 + r2) / 2`` the centre of mass.
* ``spring_force(q)`` is the force on bead 1 (``F1 = -F2 = F``), so a
  Hookean spring gives ``F = H q`` and pulls bead 1 towards bead 2.
* In channel geometry the walls sit at ``y = 0`` and ``y = gap``, and the
  wall-normal coordinate is vector component 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np


class DomainError(ValueError):
    """Raised when a connector leaves the admissible spring domain."""


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensional constants (SI).

    ``mass`` is the bead mass ``m``; the inertialess limit is ``mass -> 0``.
    ``rho_p`` is derived as ``2 m / V_d``.
    """

    zeta: float = 4.0
    kBT: float = 1.0
    mass: float = 0.04
    eta_s: float = 1.0
    rho_s: float = 1.0
    V_d: float = 1e-3
    N_av: float = 1.0
    dim: int = 2

    def __post_init__(self):
        for name in ("zeta", "kBT", "mass", "eta_s", "rho_s", "V_d", "N_av"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be strictly positive, got {val!r}")
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim!r}")

    @property
    def rho_p(self) -> float:
        return 2.0 * self.mass / self.V_d

    @property
    def lambda_B(self) -> float:
        return self.mass / self.zeta

    def with_(self, **changes) -> "PhysicalParams":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(changes)
        return PhysicalParams(**d)


@dataclass(frozen=True)
class Hookean:
    H: float = 1.0

    def __post_init__(self):
        if not self.H > 0:
            raise ValueError("spring constant H must be positive")

    def force(self, q) -> np.ndarray:
        return self.H * np.asarray(q, dtype=float)

    def potential(self, q2) -> np.ndarray:
        """Spring energy as a function of ``|q|**2``."""
        return 0.5 * self.H * np.asarray(q2, dtype=float)

    def admissible(self, q2) -> np.ndarray:
        return np.ones(np.shape(q2), dtype=bool)


@dataclass(frozen=True)
class FENE:
    """Warner FENE spring, ``F = H q / (1 - |q|^2 / q0^2)`` on ``|q| < q0``."""

    H: float = 1.0
    q0: float = 10.0

    def __post_init__(self):
        if not (self.H > 0 and self.q0 > 0):
            raise ValueError("FENE needs H > 0 and q0 > 0")

    def b(self, kBT: float) -> float:
        return self.H * self.q0**2 / kBT

    def force(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        q2 = np.sum(q * q, axis=-1, keepdims=True)
        if np.any(q2 >= self.q0**2):
            raise DomainError(f"FENE connector length reached q0={self.q0}")
        return self.H * q / (1.0 - q2 / self.q0**2)

    def potential(self, q2) -> np.ndarray:
        q2 = np.asarray(q2, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            u = -0.5 * self.H * self.q0**2 * np.log1p(-q2 / self.q0**2)
        return np.where(q2 < self.q0**2, u, np.inf)

    def admissible(self, q2) -> np.ndarray:
        return np.asarray(q2) < self.q0**2


SpringLaw = Union[Hookean, FENE]


def spring_force(q, law: SpringLaw) -> np.ndarray:
    """Force on bead 1 for connector(s) ``q`` (last axis = components)."""
    return law.force(q)


def force_magnitude_ratio(q2, law: SpringLaw) -> np.ndarray:
    """Scalar ``F(|q|)/|q|`` so that ``F = ratio * q``."""
    q2 = np.asarray(q2, dtype=float)
    if isinstance(law, FENE):
        return law.H / (1.0 - q2 / law.q0**2)
    return np.full_like(q2, law.H)


def ell0(params: PhysicalParams, law: SpringLaw) -> float:
    """Mesoscopic length ``sqrt(kBT / H)``."""
    return math.sqrt(params.kBT / law.H)


def lambda_H(params: PhysicalParams, law: SpringLaw) -> float:
    return params.zeta / (4.0 * law.H)


# ---------------------------------------------------------------- geometry


@dataclass(frozen=True)
class Channel:
    gap: float

    def __post_init__(self):
        if not self.gap > 0:
            raise ValueError("channel gap must be positive")

    def contains(self, r) -> np.ndarray:
        y = np.asarray(r, dtype=float)[..., 1]
        return (y > 0.0) & (y < self.gap)


@dataclass(frozen=True)
class PeriodicBox:
    side: float

    def __post_init__(self):
        if not self.side > 0:
            raise ValueError("box side must be positive")

    def contains(self, r) -> np.ndarray:
        return np.ones(np.shape(r)[:-1], dtype=bool)


@dataclass(frozen=True)
class FreeSpace:
    def contains(self, r) -> np.ndarray:
        return np.ones(np.shape(r)[:-1], dtype=bool)


Geometry = Union[Channel, PeriodicBox, FreeSpace]


def in_configuration_set(x, q, s, geom: Geometry) -> np.ndarray:
    """True where both beads ``x + (s -/+ 1/2) q`` lie inside the domain."""
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    s = np.asarray(s, dtype=float)[..., None] if np.ndim(s) else float(s)
    return geom.contains(x + (s - 0.5) * q) & geom.contains(x + (s + 0.5) * q)


# ---------------------------------------------------------------- nondim


@dataclass(frozen=True)
class NondimGroups:
    De: float
    Re: float
    ell_ratio: float
    eta_s_star: float
    eta_p_star: float
    lambda_H: float
    lambda_B: float

    @property
    def epsilon(self) -> float:
        """Nondimensional inertia parameter ``sqrt(lambda_B / lambda_H)``."""
        return math.sqrt(self.lambda_B / self.lambda_H)


def nondim_groups(params: PhysicalParams, law: SpringLaw, V: float, L: float) -> NondimGroups:
    if not (V > 0 and L > 0):
        raise ValueError("velocity and length scales must be positive")
    lam = lambda_H(params, law)
    eta_p = params.N_av * params.kBT * lam
    eta = params.eta_s + eta_p
    return NondimGroups(
        De=params.zeta * V / (4.0 * law.H * L),
        Re=params.rho_s * V * L / eta,
        ell_ratio=ell0(params, law) / L,
        eta_s_star=params.eta_s / eta,
        eta_p_star=eta_p / eta,
        lambda_H=lam,
        lambda_B=params.lambda_B,
    )


@dataclass(frozen=True)
class Scales:
    """Reference scales for the rescaling ``x* = x/L, t* = tV/L, ...``."""

    V: float
    L: float
    N_av: float
    ell0: float
    H: float
    kBT: float
    De: float
    dim: int = 2

    @classmethod
    def from_params(cls, params: PhysicalParams, law: SpringLaw, V: float, L: float) -> "Scales":
        g = nondim_groups(params, law, V, L)
        return cls(V=V, L=L, N_av=params.N_av, ell0=ell0(params, law), H=law.H,
                   kBT=params.kBT, De=g.De, dim=params.dim)

    def factors(self) -> dict:
        return {
            "x": self.L,
            "v": self.V,
            "t": self.L / self.V,
            "N": self.N_av,
            "q": self.ell0,
            "F": self.H * self.ell0,
            "psi": self.N_av / self.ell0**self.dim,
            "tau": self.N_av * self.kBT * self.De,
        }

    def to_nondim(self, **fields) -> dict:
        f = self.factors()
        return {k: np.asarray(v, dtype=float) / f[k] for k, v in fields.items()}

    def to_dim(self, **fields) -> dict:
        f = self.factors()
        return {k: np.asarray(v, dtype=float) * f[k] for k, v in fields.items()}
