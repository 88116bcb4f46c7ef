"""Stationarity measures for composite problems ``psi = f + phi``.

``normal_map(z)`` evaluates ``grad f(x) + (z - x)/gamma`` at ``x = prox(z)``;
``natural_map(x)`` is the proximal-gradient residual
``(x - prox(x - gamma grad f(x)))/gamma``. For weakly convex ``phi`` they
bracket the subgradient distance::

    (1 - gamma rho) ||F_nat(prox z)|| <= dist(0, subdiff psi(prox z)) <= ||F_nor(z)||
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._validation import as_vector
from .problems import Problem
from .regularizers import INFINITY, Regularizer

__all__ = [
    "GammaRangeWarning",
    "ReferenceSolution",
    "StationaritySnapshot",
    "lyapunov",
    "lyapunov_constant",
    "natural_map",
    "normal_map",
    "normal_map_i",
    "psi_value",
    "reference_solve",
    "snapshot",
    "subgradient_distance",
]


class GammaRangeWarning(UserWarning):
    pass


def normal_map(prob: Problem, reg: Regularizer, gamma: float, z) -> tuple[np.ndarray, np.ndarray]:
    z = as_vector(z, dim=prob.p, name="z")
    x = reg.prox(gamma, z)
    return x, prob.gradient(x) + (z - x) / gamma


def normal_map_i(prob: Problem, reg: Regularizer, gamma: float, z, i: int) -> tuple[np.ndarray, np.ndarray]:
    """Client-local normal map, built from ``grad f_i`` instead of ``grad f``."""
    z = as_vector(z, dim=prob.p, name="z")
    x = reg.prox(gamma, z)
    return x, prob.full_gradient(i, x) + (z - x) / gamma


def natural_map(prob: Problem, reg: Regularizer, gamma: float, x, grad=None) -> np.ndarray:
    x = as_vector(x, dim=prob.p)
    g = prob.gradient(x) if grad is None else grad
    return (x - reg.prox(gamma, x - gamma * g)) / gamma


def psi_value(prob: Problem, reg: Regularizer, x):
    phi = reg.value(x)
    if phi is INFINITY:
        return INFINITY
    return prob.f_value(x) + phi


def subgradient_distance(prob: Problem, reg: Regularizer, x, grad=None) -> float:
    """``dist(0, subdiff psi(x))`` for separable ``phi``."""
    x = as_vector(x, dim=prob.p)
    g = prob.gradient(x) if grad is None else grad
    return float(np.linalg.norm(g + reg.min_norm_subgradient(x, g)))


def lyapunov_constant(gamma: float, rho: float, L: float) -> float:
    """``C_0 = (3 - 4 gamma rho) / (2 (3 - 4 gamma rho + 4 gamma^2 L^2))``."""
    a = 3.0 - 4.0 * gamma * rho
    return a / (2.0 * (a + 4.0 * gamma * gamma * L * L))


def lyapunov(prob: Problem, reg: Regularizer, gamma: float, z, L: float | None = None) -> float:
    """``H(z) = psi(prox z) + (gamma C_0 / 2) ||F_nor(z)||^2``.

    ``C_0`` lies in ``[4/9, 1/2)`` only for ``gamma <= 1/(5(rho + L))``; outside
    that range the value is still returned, with a :class:`GammaRangeWarning`.
    """
    L = prob.L_bound if L is None else L
    if gamma > 1.0 / (5.0 * (reg.rho + L)) * (1 + 1e-12):
        warnings.warn(
            f"gamma={gamma:g} exceeds 1/(5(rho+L))={1.0 / (5.0 * (reg.rho + L)):g}; "
            "C_0 may leave [4/9, 1/2)",
            GammaRangeWarning,
            stacklevel=2,
        )
    x, fnor = normal_map(prob, reg, gamma, z)
    psi = psi_value(prob, reg, x)
    if psi is INFINITY:
        return math.inf
    return psi + 0.5 * gamma * lyapunov_constant(gamma, reg.rho, L) * float(fnor @ fnor)


@dataclass(frozen=True)
class StationaritySnapshot:
    fnor_sq: float
    fnat_sq: float
    subgrad_dist_sq: float | None
    psi_value: float
    lyapunov: float
    gamma: float


def snapshot(prob: Problem, reg: Regularizer, gamma: float, z, L: float | None = None) -> StationaritySnapshot:
    """All stationarity measures at ``z`` and its paired ``x = prox(z)``."""
    L = prob.L_bound if L is None else L
    z = as_vector(z, dim=prob.p)
    x = reg.prox(gamma, z)
    g = prob.gradient(x)
    fnor = g + (z - x) / gamma
    fnat = natural_map(prob, reg, gamma, x, grad=g)
    try:
        dist = subgradient_distance(prob, reg, x, grad=g) ** 2
    except (TypeError, ValueError):
        dist = None
    psi = psi_value(prob, reg, x)
    psi = math.inf if psi is INFINITY else psi
    fnor_sq = float(fnor @ fnor)
    H = psi + 0.5 * gamma * lyapunov_constant(gamma, reg.rho, L) * fnor_sq
    return StationaritySnapshot(fnor_sq, float(fnat @ fnat), dist, psi, H, gamma)


@dataclass(frozen=True)
class ReferenceSolution:
    z: np.ndarray
    x: np.ndarray
    psi_star: float
    psi_star_proxgrad: float
    converged: bool
    iterations: int
    residual: float

    @property
    def agreement(self) -> float:
        return abs(self.psi_star - self.psi_star_proxgrad)


def reference_solve(
    prob: Problem,
    reg: Regularizer,
    gamma: float,
    z0=None,
    tol: float = 1e-11,
    max_iter: int = 200_000,
    step: float | None = None,
) -> ReferenceSolution:
    """Deterministic centralized solve by the normal-map iteration ``z <- z - eta F_nor(z)``.

    A plain proximal-gradient run from the same start with step
    ``eta = min(gamma, 0.9/L)`` is carried out as a cross-check; on convex problems the two
    optimal values must agree. ``converged`` is False if either run hits
    ``max_iter`` before ``||F_nat|| <= tol``, in which case the best iterate
    seen is returned.
    """
    reg.check_gamma(gamma)
    eta = min(gamma, 0.9 / prob.L_bound) if step is None else step
    z = np.zeros(prob.p) if z0 is None else as_vector(z0, dim=prob.p).copy()
    # the cross-check starts from the same point, not from the answer
    xp = reg.prox(gamma, z)

    best = (math.inf, z, reg.prox(gamma, z))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        x = reg.prox(gamma, z)
        g = prob.gradient(x)
        res = float(np.linalg.norm(natural_map(prob, reg, gamma, x, grad=g)))
        if res < best[0]:
            best = (res, z.copy(), x)
        if res <= tol:
            converged = True
            break
        z = z - eta * (g + (z - x) / gamma)
    res, z, x = best

    pg_converged = False
    for _ in range(max_iter):
        g = prob.gradient(xp)
        if np.linalg.norm(natural_map(prob, reg, gamma, xp, grad=g)) <= tol:
            pg_converged = True
            break
        xp = reg.prox(eta, xp - eta * g)

    psi = psi_value(prob, reg, x)
    psi_pg = psi_value(prob, reg, xp)
    return ReferenceSolution(
        z=z,
        x=x,
        psi_star=math.inf if psi is INFINITY else float(psi),
        psi_star_proxgrad=math.inf if psi_pg is INFINITY else float(psi_pg),
        converged=converged and pg_converged,
        iterations=it,
        residual=res,
    )
