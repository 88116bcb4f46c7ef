"""Step-size schedules prescribed by the convergence theory.

Both schedulers return a :class:`Schedule` that carries the chosen values,
the premise bounds they were checked against, and human-readable flags for
every bound that is violated or every fallback that was taken. Nothing is
silently clipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ._validation import check_count, check_positive

__all__ = ["Schedule", "theorem1_params", "theorem2_params"]


@dataclass(frozen=True)
class Schedule:
    gamma: float
    eta_a: float
    eta_s: float
    eta_hat: float
    m: int
    flags: tuple[str, ...] = field(default_factory=tuple)
    bounds: dict = field(default_factory=dict)

    @property
    def premise_ok(self) -> bool:
        return not any(f.startswith("premise") for f in self.flags)

    def fed_kwargs(self) -> dict:
        return {"gamma": self.gamma, "eta_a": self.eta_a, "eta_s": self.eta_s}


def _nonconvex_bounds(L, rho, gamma, m, Q):
    root = math.sqrt(L * L + 1.0 / (gamma * gamma))
    return {
        "eta_hat_max": (1.0 - gamma * rho) / (100.0 * m * root),
        "eta_a_max": (1.0 - gamma * rho) / (100.0 * Q * math.sqrt(m) * root),
    }


def theorem1_params(L: float, rho: float, sigma: float, T: int, n: int, Q: int,
                    delta_psi: float, eta_s_cap: float = 1e3) -> Schedule:
    """Schedule for the general nonconvex rate.

    ``gamma = 1/(5(rho+L))``, ``eta_hat = 1/(320 sqrt(sigma^2 T (rho+L)/(nQ dpsi)))``,
    ``m = ceil(sqrt(sigma^2 T / (9 (L+rho) dpsi n Q)))`` and the two-term
    ``eta_a``; ``eta_s`` is whatever makes ``eta_a eta_s Q = eta_hat``.

    With ``sigma = 0`` the formulas are undefined; the premise bounds at
    ``m = 1`` are used instead and the schedule is flagged ``deterministic``.
    If the implied ``eta_s`` exceeds ``eta_s_cap``, ``eta_a`` is first raised
    to its premise bound.
    """
    L = check_positive(L, "L")
    rho = check_positive(rho, "rho", strict=False)
    sigma = check_positive(sigma, "sigma", strict=False)
    T = check_count(T, "T")
    n = check_count(n, "n")
    Q = check_count(Q, "Q")
    delta_psi = check_positive(delta_psi, "delta_psi")
    Lr = L + rho
    gamma = 1.0 / (5.0 * Lr)
    flags = []

    if sigma == 0:
        m = 1
        bounds = _nonconvex_bounds(L, rho, gamma, m, Q)
        eta_hat = bounds["eta_hat_max"]
        eta_a = bounds["eta_a_max"]
        flags.append("deterministic: sigma=0, premise bounds at m=1 used")
    else:
        s2 = sigma * sigma
        eta_hat = 1.0 / (320.0 * math.sqrt(s2 * T * Lr / (n * Q * delta_psi)))
        m = max(1, math.ceil(math.sqrt(s2 * T / (9.0 * Lr * delta_psi * n * Q))))
        eta_a = 1.0 / (
            380.0 * (s2 * T * Q**3 * Lr**3 / (n * delta_psi)) ** 0.25
            + 240.0 * math.sqrt(Lr * T * Q * s2 / delta_psi)
        )
        bounds = _nonconvex_bounds(L, rho, gamma, m, Q)

    eta_s = eta_hat / (eta_a * Q)
    if eta_s > eta_s_cap and bounds["eta_a_max"] > eta_a:
        eta_a = bounds["eta_a_max"]
        eta_s = eta_hat / (eta_a * Q)
        flags.append("eta_a raised to its premise bound to respect eta_s cap")
    if eta_s > eta_s_cap:
        flags.append(f"eta_s={eta_s:.4g} exceeds cap {eta_s_cap:g}")

    if eta_hat > bounds["eta_hat_max"] * (1 + 1e-12):
        flags.append(f"premise: eta_hat={eta_hat:.4g} > {bounds['eta_hat_max']:.4g}")
    if eta_a > bounds["eta_a_max"] * (1 + 1e-12):
        flags.append(f"premise: eta_a={eta_a:.4g} > {bounds['eta_a_max']:.4g}")
    return Schedule(gamma, eta_a, eta_s, eta_hat, m, tuple(flags), bounds)


def theorem2_params(L: float, rho: float, mu: float, n: int, Q: int, T: int,
                    eta_s: float = 1.0) -> Schedule:
    """Schedule for the linear rate under the proximal-PL inequality.

    ``gamma = 1/(5(mu+L+rho))``, ``eta_a = log(nQT)/(120 Q (L+rho+mu) T)``,
    ``m = ceil(mu T/(L+rho))``, ``eta_hat = eta_a eta_s Q``.
    """
    L = check_positive(L, "L")
    rho = check_positive(rho, "rho", strict=False)
    mu = check_positive(mu, "mu")
    n, Q, T = check_count(n, "n"), check_count(Q, "Q"), check_count(T, "T")
    eta_s = check_positive(eta_s, "eta_s")
    total = L + rho + mu
    gamma = 1.0 / (5.0 * total)
    eta_a = math.log(n * Q * T) / (120.0 * Q * total * T)
    m = math.ceil(mu * T / (L + rho))
    eta_hat = eta_a * eta_s * Q
    bounds = {
        "eta_hat_max": 1.0 / (120.0 * m * total),
        "eta_a_max": 1.0 / (96.0 * Q * total),
        "gamma_max": gamma,
    }
    flags = []
    if eta_a == 0:
        flags.append("degenerate: log(nQT) = 0 gives eta_a = 0")
    if eta_hat > bounds["eta_hat_max"] * (1 + 1e-12):
        flags.append(f"premise: eta_hat={eta_hat:.4g} > {bounds['eta_hat_max']:.4g}")
    if eta_a > bounds["eta_a_max"] * (1 + 1e-12):
        flags.append(f"premise: eta_a={eta_a:.4g} > {bounds['eta_a_max']:.4g}")
    return Schedule(gamma, eta_a, eta_s, eta_hat, m, tuple(flags), bounds)
