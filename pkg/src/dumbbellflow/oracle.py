"""Independent reference computations used to check the solvers."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg, stats

from .core import FENE, Hookean, PhysicalParams


@dataclass
class ConformationState:
    """Dimensionless conformation ``A = <q q> H / kBT``."""

    A: np.ndarray
    t: float


def shear_gradient(gammadot: float, dim: int = 2) -> np.ndarray:
    """Velocity gradient ``kappa[i, j] = d v_i / d x_j`` for ``v_x = gammadot * y``."""
    k = np.zeros((dim, dim))
    k[0, 1] = gammadot
    return k


def _closure_factor(A, model, b):
    if model == "OldroydB":
        return 1.0
    tr = np.trace(A)
    if tr >= b:
        raise ValueError(f"FENE-P conformation trace {tr:.4g} reached b={b}")
    return 1.0 / (1.0 - tr / b)


def constitutive_ode(gammadot: float, lambda_H: float, model: str = "OldroydB", t_final: float = 20.0,
                     b: float | None = None, N_kBT: float = 1.0, dim: int = 2, kappa=None,
                     dt: float | None = None, A0=None):
    """Integrate ``dA/dt = kappa A + A kappa^T - (g(A) A - I) / lambda_H`` with RK4.

    Returns ``(ConformationState, tau)`` with ``tau = N kBT (g(A) A - I)``.
    """
    if model not in ("OldroydB", "FENE_P"):
        raise ValueError(f"unknown model {model!r}")
    if model == "FENE_P" and not (b and b > 0):
        raise ValueError("FENE_P requires b > 0")
    if not lambda_H > 0:
        raise ValueError("lambda_H must be positive")
    K = shear_gradient(gammadot, dim) if kappa is None else np.asarray(kappa, dtype=float)
    I = np.eye(dim)
    if A0 is None:
        A = I.copy() if model == "OldroydB" else I * b / (b + dim)
    else:
        A = np.array(A0, dtype=float)
    dt = lambda_H / 100.0 if dt is None else dt

    def rhs(A):
        g = _closure_factor(A, model, b)
        return K @ A + A @ K.T - (g * A - I) / lambda_H

    n = int(math.ceil(t_final / dt - 1e-12))
    h = t_final / n if n else 0.0
    for _ in range(n):
        k1 = rhs(A)
        k2 = rhs(A + 0.5 * h * k1)
        k3 = rhs(A + 0.5 * h * k2)
        k4 = rhs(A + h * k3)
        A = A + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    tau = N_kBT * (_closure_factor(A, model, b) * A - I)
    return ConformationState(A, t_final), tau


def oldroyd_b_steady_shear(weissenberg: float) -> np.ndarray:
    """Closed-form steady conformation for ``Wi = lambda_H * gammadot`` (2D)."""
    wi = weissenberg
    return np.array([[1 + 2 * wi**2, wi], [wi, 1.0]])


def equilibrium_moments(law, params: PhysicalParams) -> np.ndarray:
    """Equilibrium ``<q q>`` for the spring law in ``params.dim`` dimensions."""
    d, kT = params.dim, params.kBT
    if isinstance(law, Hookean):
        return (kT / law.H) * np.eye(d)
    if isinstance(law, FENE):
        q0 = law.q0

        def weight(r):
            return np.exp(-law.potential(r * r) / kT) if r < q0 else 0.0

        num = integrate.quad(lambda r: r ** (d + 1) * weight(r), 0, q0, limit=200)[0]
        den = integrate.quad(lambda r: r ** (d - 1) * weight(r), 0, q0, limit=200)[0]
        return (num / den / d) * np.eye(d)
    raise TypeError(f"unsupported spring law {law!r}")


# ----------------------------------------------------------- collision


def momentum_grid(kBT: float = 1.0, n: int = 128, width: float = 6.0):
    """Cell centres on ``|p| <= width sqrt(kBT)`` and the spacing."""
    pmax = width * math.sqrt(kBT)
    h = 2 * pmax / n
    return -pmax + (np.arange(n) + 0.5) * h, h


def maxwellian(p_axes, kBT: float = 1.0) -> np.ndarray:
    """Normalised Gaussian ``exp(-|p|^2 / 2 kBT)`` on a tensor grid of 1 or 2 axes."""
    grids = np.meshgrid(*p_axes, indexing="ij")
    p2 = sum(g**2 for g in grids)
    d = len(p_axes)
    return np.exp(-p2 / (2 * kBT)) / (2 * np.pi * kBT) ** (d / 2)


def collision_apply(Phi: np.ndarray, p_axis: np.ndarray, kBT: float = 1.0) -> np.ndarray:
    """Conservative discretisation of ``div_p(p Phi) + kBT lap_p Phi`` with zero-flux edges.

    ``Phi`` is 1-D or 2-D; every axis uses the same cell-centred ``p_axis``.
    """
    Phi = np.asarray(Phi, dtype=float)
    if Phi.ndim not in (1, 2):
        raise ValueError("collision oracle supports d=1 and d=2")
    h = p_axis[1] - p_axis[0]
    pf = 0.5 * (p_axis[1:] + p_axis[:-1])
    out = np.zeros_like(Phi)
    for ax in range(Phi.ndim):
        lo = np.take(Phi, np.arange(Phi.shape[ax] - 1), axis=ax)
        hi = np.take(Phi, np.arange(1, Phi.shape[ax]), axis=ax)
        shape = [1] * Phi.ndim
        shape[ax] = -1
        J = pf.reshape(shape) * 0.5 * (lo + hi) + kBT * (hi - lo) / h
        pad = [(0, 0)] * Phi.ndim
        pad[ax] = (1, 1)
        Jp = np.pad(J, pad)
        out += np.diff(Jp, axis=ax) / h
    return out


# ------------------------------------------------------------ dumbbells


def inertial_dumbbell_covariance(params: PhysicalParams, law: Hookean, kappa) -> dict:
    """Stationary covariance of the inertial Hookean connector in a homogeneous flow.

    Solves the Lyapunov equation for ``z = (q, w)`` with ``w = V2 - V1``:
    ``dq = w dt``, ``m dw = (-zeta (w - kappa q) - 2 H q) dt + sqrt(4 zeta kBT) dW``.
    """
    if not isinstance(law, Hookean):
        raise TypeError("closed-form covariance needs a Hookean spring")
    K = np.asarray(kappa, dtype=float)
    d = K.shape[0]
    m, z, H, kT = params.mass, params.zeta, law.H, params.kBT
    I = np.eye(d)
    M = np.block([[np.zeros((d, d)), I], [(z * K - 2 * H * I) / m, -(z / m) * I]])
    B = np.vstack([np.zeros((d, d)), math.sqrt(4 * z * kT) / m * I])
    C = linalg.solve_continuous_lyapunov(M, -B @ B.T)
    return {"qq": C[:d, :d], "qw": C[:d, d:], "ww": C[d:, d:]}


def inertialess_dumbbell_covariance(params: PhysicalParams, law: Hookean, kappa) -> np.ndarray:
    """Stationary ``<q q>`` of ``dq = (kappa q - 2 H q / zeta) dt + sqrt(4 kBT / zeta) dW``."""
    K = np.asarray(kappa, dtype=float)
    d = K.shape[0]
    M = K - 2 * law.H / params.zeta * np.eye(d)
    return linalg.solve_continuous_lyapunov(M, -4 * params.kBT / params.zeta * np.eye(d))


# ------------------------------------------------------------- fitting


@dataclass
class OrderFit:
    slope: float
    ci_low: float
    ci_high: float
    intercept: float


def convergence_order(errors, spacings, confidence: float = 0.95) -> OrderFit:
    """Least-squares slope of ``log(error)`` against ``log(spacing)``."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(spacings, dtype=float)
    if e.size < 3 or e.size != h.size:
        raise ValueError("need at least 3 matching (error, spacing) pairs")
    if np.any(e <= 0) or np.any(h <= 0):
        raise ValueError("errors and spacings must be positive")
    if np.any(np.diff(h) >= 0):
        raise ValueError("spacings must be strictly decreasing")
    res = stats.linregress(np.log(h), np.log(e))
    half = stats.t.ppf(0.5 + confidence / 2, e.size - 2) * res.stderr
    return OrderFit(float(res.slope), float(res.slope - half), float(res.slope + half), float(res.intercept))
