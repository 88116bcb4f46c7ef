"""Invariant suite behind ``fednmap verify``.

Each check returns a :class:`Check` with the worst observed value and the
tolerance it was held to. The run-based checks use the configured problem
and step sizes; the pointwise checks use seeded random quadratics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .algorithms import FedNMap, LiveOracle, Scaffold
from .maps import natural_map, normal_map, subgradient_distance
from .problems import AdditiveGaussian, make_composite_quadratic
from .regularizers import INFINITY, Regularizer
from .rng import RngStream
from .simulator import RunSpec, resolve, start_point

__all__ = ["Check", "format_table", "run_checks"]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""


def _check(name, value, tol, detail=""):
    return Check(name, float(value), float(tol), bool(value <= tol), detail)


def _fednmap_traces(spec: RunSpec, rounds: int):
    res = resolve(replace(spec, algorithm="fednmap"))
    fed = res.spec.fed.replace(T=rounds)
    reg = res.spec.regularizer
    alg = FedNMap(res.prob, reg, fed, start_point("fednmap", reg, fed, res.x0))
    oracle = LiveOracle(res.prob, res.spec.seed)
    return fed, [alg.step(oracle) for _ in range(rounds)]


def check_tracking(spec: RunSpec, rounds: int) -> list[Check]:
    fed, traces = _fednmap_traces(spec, rounds)
    track, zero_mean = 0.0, 0.0
    for tr in traces:
        rhs = (tr.grads.mean(axis=0) + (tr.z - tr.x) / fed.gamma).mean(axis=0)
        track = max(track, np.linalg.norm(tr.ys.mean(axis=0) - rhs) / max(1.0, np.linalg.norm(rhs)))
        scale = max(1.0, float(np.abs(tr.cs).max()))
        zero_mean = max(zero_mean, np.linalg.norm(tr.cs.mean(axis=0)) / scale)
    detail = f"{rounds} rounds, relative to max(1, scale)"
    return [_check("tracking identity", track, 1e-12, detail),
            _check("zero-mean corrections", zero_mean, 1e-12, detail)]


def check_scaffold(spec: RunSpec, rounds: int) -> Check:
    res = resolve(replace(spec, algorithm="fednmap"))
    fed = res.spec.fed.replace(T=rounds)
    zero = Regularizer.zero()
    f = FedNMap(res.prob, zero, fed, res.x0)
    s = Scaffold(res.prob, fed, x0=res.x0)
    worst = 0.0
    for _ in range(rounds):
        f.step(LiveOracle(res.prob, res.spec.seed), trace=False)
        s.step(LiveOracle(res.prob, res.spec.seed), trace=False)
        worst = max(worst, np.linalg.norm(f.x - s.x) / max(1.0, np.linalg.norm(f.x)))
    return _check("scaffold equivalence (phi=0)", worst, 1e-10, f"{rounds} rounds, shared draws")


def check_sandwich(seed: int, cases: int = 500) -> Check:
    rng = np.random.default_rng(seed)
    regs = [Regularizer.l1(0.4), Regularizer.elastic_net(0.3, 0.2)]
    worst = -math.inf
    for k in range(cases):
        prob = make_composite_quadratic(3, 6, 1.0, seed=int(rng.integers(1 << 31)))
        reg = regs[k % 2]
        gamma = float(rng.uniform(0.01, 2.0))
        x, fnor = normal_map(prob, reg, gamma, rng.normal(size=6) * 3)
        fnat = natural_map(prob, reg, gamma, x)
        dist = subgradient_distance(prob, reg, x)
        worst = max(worst, (1 - gamma * reg.rho) * np.linalg.norm(fnat) - dist,
                    dist - np.linalg.norm(fnor))
    return _check("sandwich inequality", max(worst, 0.0), 1e-10, f"{cases} random points")


def _golden(fun, a, b, iters=200):
    c, d = b - _INVPHI * (b - a), a + _INVPHI * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def brute_prox_scalar(reg: Regularizer, gamma: float, v: float, grid: int = 2001) -> float:
    """1-D minimiser of ``phi(y) + (y - v)^2 / (2 gamma)`` by grid search and golden section."""
    def obj(y):
        val = reg.value(np.array([y]))
        return math.inf if val is INFINITY else val + (y - v) ** 2 / (2.0 * gamma)
    a = max(reg.lo, v - 10.0 * (abs(v) + 1.0))
    b = min(reg.hi, v + 10.0 * (abs(v) + 1.0))
    if a >= b:
        return a
    ys = np.linspace(a, b, grid)
    k = int(np.argmin([obj(y) for y in ys]))
    left, right = ys[max(k - 1, 0)], ys[min(k + 1, grid - 1)]
    y = _golden(obj, left, right)
    return min((y, left, right), key=obj)


def check_prox(seed: int, cases: int = 400) -> Check:
    rng = np.random.default_rng(seed)
    regs = [Regularizer.zero(), Regularizer.l1(0.5), Regularizer.elastic_net(0.3, 0.2),
            Regularizer.box(-0.5, 1.5)]
    worst = 0.0
    for k in range(cases):
        reg = regs[k % len(regs)]
        gamma, v = float(rng.uniform(0.05, 3.0)), float(rng.normal() * 3)
        worst = max(worst, abs(reg.prox(gamma, [v])[0] - brute_prox_scalar(reg, gamma, v)))
    return _check("prox oracle", worst, 1e-6, f"{cases} scalar instances")


def check_unbiased(seed: int, pairs: int = 2, draws: int = 20_000) -> Check:
    """Worst per-coordinate |MC mean - F_nor(z)| in standard errors."""
    rng = np.random.default_rng(seed)
    reg = Regularizer.elastic_net(0.2, 0.1)
    worst = 0.0
    for k in range(pairs):
        prob = make_composite_quadratic(2, 5, 1.0, seed=int(rng.integers(1 << 31)),
                                        noise=AdditiveGaussian(1.0))
        gamma = 0.3
        z = rng.normal(size=5)
        x, fnor = normal_map(prob, reg, gamma, z)
        shift = (z - x) / gamma
        samples = np.array([
            np.mean([prob.stochastic_gradient(i, x, RngStream(seed, client=i, round=k, step=d))
                     for i in range(prob.n)], axis=0) + shift
            for d in range(draws)])
        se = samples.std(axis=0, ddof=1) / math.sqrt(draws)
        worst = max(worst, float(np.max(np.abs(samples.mean(axis=0) - fnor) / se)))
    return _check("unbiased normal-map direction", worst, 4.0, f"{pairs}x{draws} draws, in std errors")


def run_checks(spec: RunSpec, rounds: int = 20) -> list[Check]:
    rounds = max(1, min(rounds, spec.fed.T or rounds))
    checks = check_tracking(spec, rounds)
    checks.append(check_scaffold(spec, rounds))
    checks.append(check_sandwich(spec.seed))
    checks.append(check_prox(spec.seed))
    checks.append(check_unbiased(spec.seed))
    return checks


def format_table(checks: list[Check]) -> str:
    width = max(len(c.name) for c in checks)
    lines = [f"{'check':<{width}}  {'value':>11}  {'tol':>9}  result", "-" * (width + 36)]
    for c in checks:
        verdict = "PASS" if c.passed else "FAIL"
        lines.append(f"{c.name:<{width}}  {c.value:11.3e}  {c.tolerance:9.1e}  {verdict}  {c.detail}")
    return "\n".join(lines)
