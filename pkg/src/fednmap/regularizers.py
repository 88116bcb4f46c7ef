"""Separable nonsmooth regularizers with closed-form proximal operators.

Every built-in kind acts coordinatewise, so the proximal map, the value and
the subdifferential are all computed elementwise. The subdifferential of a
separable regularizer at ``x`` is a box ``[lo_j, hi_j]`` per coordinate;
:meth:`Regularizer.subdifferential_box` exposes it and everything else
(minimum-norm subgradients, membership checks) is built on top of it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ._validation import as_vector, check_positive

__all__ = [
    "INFINITY",
    "Extended",
    "InvalidGammaError",
    "Kind",
    "Regularizer",
    "UnsupportedRegularizerError",
    "min_norm_subgradient",
    "phi_value",
    "prox",
]


class Kind(str, enum.Enum):
    ZERO = "zero"
    L1 = "l1"
    ELASTIC_NET = "elastic_net"
    BOX = "box"


class Extended(enum.Enum):
    """Extended-real marker returned by indicator regularizers off their domain."""

    INFINITY = "inf"

    def __repr__(self):
        return "INFINITY"


INFINITY = Extended.INFINITY


class InvalidGammaError(ValueError):
    pass


class UnsupportedRegularizerError(TypeError):
    pass


_SEPARABLE = frozenset(Kind)


@dataclass(frozen=True)
class Regularizer:
    """A nonsmooth term ``phi`` together with its weak-convexity modulus."""

    kind: Kind = Kind.ZERO
    nu1: float = 0.0
    nu2: float = 0.0
    lo: float = -np.inf
    hi: float = np.inf
    rho: float = 0.0
    feas_tol: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        check_positive(self.nu1, "nu1", strict=False)
        check_positive(self.nu2, "nu2", strict=False)
        check_positive(self.feas_tol, "feas_tol", strict=False)
        if not np.isfinite(self.rho) or self.rho < 0:
            raise ValueError(f"rho must be a finite nonnegative number, got {self.rho}")
        if self.kind is Kind.BOX and not self.lo <= self.hi:
            raise ValueError(f"box requires lo <= hi, got lo={self.lo}, hi={self.hi}")

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls) -> "Regularizer":
        return cls(Kind.ZERO)

    @classmethod
    def l1(cls, nu: float) -> "Regularizer":
        return cls(Kind.L1, nu1=nu)

    @classmethod
    def elastic_net(cls, nu1: float, nu2: float) -> "Regularizer":
        return cls(Kind.ELASTIC_NET, nu1=nu1, nu2=nu2)

    @classmethod
    def box(cls, lo: float, hi: float) -> "Regularizer":
        return cls(Kind.BOX, lo=lo, hi=hi)

    @classmethod
    def from_config(cls, table: Mapping) -> "Regularizer":
        """Build from a ``{kind, nu1, nu2, lo, hi}`` mapping.

        Unknown keys raise ``KeyError`` so typos in config files surface.
        """
        allowed = {"kind", "nu1", "nu2", "lo", "hi"}
        unknown = set(table) - allowed
        if unknown:
            raise KeyError(f"unknown regularizer key(s): {', '.join(sorted(unknown))}")
        kind = Kind(table.get("kind", "zero"))
        if kind is Kind.ZERO:
            return cls.zero()
        if kind is Kind.L1:
            return cls.l1(float(table.get("nu1", 0.0)))
        if kind is Kind.ELASTIC_NET:
            return cls.elastic_net(float(table.get("nu1", 0.0)), float(table.get("nu2", 0.0)))
        return cls.box(float(table.get("lo", -np.inf)), float(table.get("hi", np.inf)))

    def to_config(self) -> dict:
        out = {"kind": self.kind.value}
        if self.kind in (Kind.L1, Kind.ELASTIC_NET):
            out["nu1"] = self.nu1
        if self.kind is Kind.ELASTIC_NET:
            out["nu2"] = self.nu2
        if self.kind is Kind.BOX:
            out["lo"], out["hi"] = self.lo, self.hi
        return out

    @property
    def is_zero(self) -> bool:
        if self.kind is Kind.ZERO:
            return True
        if self.kind in (Kind.L1, Kind.ELASTIC_NET):
            return self.nu1 == 0 and self.nu2 == 0
        return self.lo == -np.inf and self.hi == np.inf

    @property
    def strong_convexity(self) -> float:
        """Strong-convexity modulus of phi (``2*nu2`` for elastic net, else 0)."""
        return 2.0 * self.nu2 if self.kind is Kind.ELASTIC_NET else 0.0

    # -- core operations ----------------------------------------------------

    def check_gamma(self, gamma: float) -> float:
        if not np.isfinite(gamma) or gamma <= 0:
            raise InvalidGammaError(f"gamma must be > 0, got {gamma}")
        if gamma * self.rho >= 1:
            raise InvalidGammaError(f"gamma*rho must be < 1, got {gamma}*{self.rho}")
        return float(gamma)

    def prox(self, gamma: float, v) -> np.ndarray:
        """``argmin_y phi(y) + ||y - v||^2 / (2 gamma)`` in closed form."""
        gamma = self.check_gamma(gamma)
        v = as_vector(v, name="v")
        if self.kind is Kind.ZERO:
            return v.copy()
        if self.kind is Kind.BOX:
            return np.clip(v, self.lo, self.hi)
        # v - clip(v, -t, t) is sign(v) max(|v| - t, 0) exactly; |v| == t lands on 0.
        t = gamma * self.nu1
        shrunk = v - np.clip(v, -t, t) if t > 0 else v.copy()
        if self.kind is Kind.ELASTIC_NET and self.nu2 != 0:
            shrunk = shrunk / (1.0 + 2.0 * gamma * self.nu2)
        return shrunk

    def value(self, x):
        x = as_vector(x)
        if self.kind is Kind.ZERO:
            return 0.0
        if self.kind is Kind.BOX:
            tol = self.feas_tol
            if np.any(x < self.lo - tol) or np.any(x > self.hi + tol):
                return INFINITY
            return 0.0
        val = self.nu1 * float(np.sum(np.abs(x)))
        if self.kind is Kind.ELASTIC_NET:
            val += self.nu2 * float(x @ x)
        return val

    def subdifferential_box(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Per-coordinate bounds ``[lo_j, hi_j]`` of the convex subdifferential at ``x``."""
        if self.kind not in _SEPARABLE:
            raise UnsupportedRegularizerError(f"{self.kind} is not separable")
        x = as_vector(x)
        if self.kind is Kind.ZERO:
            z = np.zeros_like(x)
            return z, z.copy()
        if self.kind is Kind.BOX:
            if self.value(x) is INFINITY:
                raise ValueError("subdifferential of a box indicator requires a feasible x")
            lower = np.zeros_like(x)
            upper = np.zeros_like(x)
            at_lo = np.abs(x - self.lo) <= self.feas_tol
            at_hi = np.abs(x - self.hi) <= self.feas_tol
            lower[at_lo] = -np.inf
            upper[at_hi] = np.inf
            return lower, upper
        smooth = 2.0 * self.nu2 * x if self.kind is Kind.ELASTIC_NET else np.zeros_like(x)
        sign = np.sign(x)
        lower = smooth + np.where(sign == 0, -self.nu1, sign * self.nu1)
        upper = smooth + np.where(sign == 0, self.nu1, sign * self.nu1)
        return lower, upper

    def min_norm_subgradient(self, x, grad_f) -> np.ndarray:
        """The ``s`` in ``subdiff phi(x)`` minimising ``||grad_f + s||``.

        ``||grad_f + s||`` is then ``dist(0, subdiff psi(x))`` for ``psi = f + phi``.
        """
        x = as_vector(x)
        grad_f = as_vector(grad_f, dim=x.shape[0], name="grad_f")
        lower, upper = self.subdifferential_box(x)
        return np.clip(-grad_f, lower, upper)

    def lift(self, gamma: float, x) -> np.ndarray:
        """A point ``z`` with ``prox(gamma, z) == x``, namely ``x + gamma s`` for ``s`` in ``subdiff phi(x)``."""
        gamma = self.check_gamma(gamma)
        x = as_vector(x)
        return x + gamma * self.min_norm_subgradient(x, np.zeros_like(x))


def prox(reg: Regularizer, gamma: float, v) -> np.ndarray:
    return reg.prox(gamma, v)


def phi_value(reg: Regularizer, x):
    return reg.value(x)


def min_norm_subgradient(reg: Regularizer, x, grad_f) -> np.ndarray:
    return reg.min_norm_subgradient(x, grad_f)
