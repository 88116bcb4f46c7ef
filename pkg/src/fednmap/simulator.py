"""Deterministic round orchestration, metrics capture, draw recording and replay."""

from __future__ import annotations

import csv
import io
import math
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterable

import numpy as np

from .algorithms import (DrawScheduleError, FedConfig, LiveOracle, ReplayOracle, RoundTrace,
                         make_algorithm, ordered_sum)
from .data import Dataset, load_idx, partition_dirichlet, partition_iid, partition_sorted_by_label
from .maps import lyapunov_constant, natural_map, psi_value, reference_solve
from .problems import (AdditiveGaussian, LogisticProblem, Minibatch, MLPProblem, Problem,
                       QuadraticProblem, estimate_sigma_sq, make_composite_quadratic)
from .regularizers import INFINITY, Regularizer
from .rng import Purpose, RngStream
from .schedules import Schedule, theorem1_params, theorem2_params

__all__ = [
    "CSV_HEADER",
    "MetricsRecord",
    "ProblemSpec",
    "RunResult",
    "RunSpec",
    "SweepRow",
    "build_problem",
    "read_draws",
    "replay",
    "resolve",
    "run",
    "summarize_sweep",
    "sweep",
    "write_draws",
    "write_metrics_csv",
]

CSV_HEADER = ("round,algo,n,Q,seed,gamma,eta_a,eta_s,fnat_sq,fnor_sq,psi,psi_gap,"
              "lyapunov,train_loss,test_acc,uplink_bytes,wall_ns")
DIVERGENCE_NORM = 1e12
DRAW_MAGIC = b"FNMD"
DRAW_VERSION = 1


@dataclass(frozen=True)
class ProblemSpec:
    kind: str = "quadratic"
    p: int = 20
    hetero: float = 1.0
    problem_seed: int = 0
    noise: str = "gaussian"
    sigma: float = 0.0
    batch_size: int = 32
    images: str | None = None
    labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    limit: int | None = None
    partition: str = "sorted"
    alpha: float = 0.1
    hidden: int = 32
    psi_star: str = "auto"

    def __post_init__(self):
        if self.kind not in ("quadratic", "logistic", "mlp"):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.noise not in ("gaussian", "minibatch"):
            raise ValueError(f"unknown noise mode {self.noise!r}")
        if self.partition not in ("sorted", "dirichlet", "iid"):
            raise ValueError(f"unknown partition {self.partition!r}")
        if self.psi_star not in ("auto", "none"):
            raise ValueError("psi_star must be 'auto' or 'none'")
        if self.kind != "quadratic" and self.images is None:
            raise ValueError(f"{self.kind} problems need an images path")


@dataclass(frozen=True)
class RunSpec:
    problem: ProblemSpec
    regularizer: Regularizer
    fed: FedConfig
    algorithm: str = "fednmap"
    seed: int = 0
    metrics_every: int = 1
    record_draws: bool = False
    workers: int = 1
    schedule: str = "manual"
    timing: bool = False
    eta_a_over_Q: float | None = None

    def __post_init__(self):
        if self.eta_a_over_Q is not None and not self.eta_a_over_Q > 0:
            raise ValueError("eta_a_over_Q must be positive")
        if self.algorithm not in ("fednmap", "zhang", "scaffold"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.schedule not in ("manual", "theorem1", "theorem2"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.metrics_every < 1:
            raise ValueError("metrics_every must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class MetricsRecord:
    round: int
    algo: str
    n: int
    Q: int
    seed: int
    gamma: float
    eta_a: float
    eta_s: float
    fnat_sq: float
    fnor_sq: float
    psi: float
    psi_gap: float | None
    lyapunov: float
    train_loss: float
    test_acc: float | None
    uplink_bytes: int
    wall_ns: int | None

    def as_row(self) -> list[str]:
        return [_fmt(getattr(self, f.name)) for f in fields(self)]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunResult:
    spec: RunSpec
    records: list[MetricsRecord]
    diverged: bool = False
    draws: dict | None = None
    traces: list[RoundTrace] | None = None
    final_z: np.ndarray | None = None
    final_x: np.ndarray | None = None
    psi_star: float | None = None
    schedule: Schedule | None = None

    def to_csv(self) -> str:
        return metrics_csv(self.records)


# -- building problems -----------------------------------------------------------

@lru_cache(maxsize=8)
def _load_dataset(images: str, labels: str | None, limit: int | None) -> Dataset:
    return load_idx(images, labels, limit=limit)


@lru_cache(maxsize=16)
def build_problem(ps: ProblemSpec, n: int) -> tuple[Problem, Dataset | None]:
    """Instantiate a problem for ``n`` clients; returns it with its test set (if any).

    Cached: problems are immutable, and data-driven ones carry costly derived
    constants (the MLP smoothness estimate) worth sharing across runs.
    """
    if ps.kind == "quadratic":
        if ps.noise != "gaussian":
            raise ValueError("quadratic problems support only gaussian noise")
        prob = make_composite_quadratic(n, ps.p, ps.hetero, ps.problem_seed,
                                        noise=AdditiveGaussian(ps.sigma))
        return prob, None
    ds = _load_dataset(ps.images, ps.labels, ps.limit)
    test = _load_dataset(ps.test_images, ps.test_labels, None) if ps.test_images else None
    if ps.partition == "sorted":
        shards = partition_sorted_by_label(ds, n)
    elif ps.partition == "dirichlet":
        shards = partition_dirichlet(ds, n, ps.alpha, RngStream(ps.problem_seed, purpose=Purpose.PARTITION))
    else:
        shards = partition_iid(ds, n, RngStream(ps.problem_seed, purpose=Purpose.PARTITION))
    noise = Minibatch(ps.batch_size) if ps.noise == "minibatch" else AdditiveGaussian(ps.sigma)
    k = max(ds.n_classes, test.n_classes if test is not None else 0, 2)
    if ps.kind == "logistic":
        return LogisticProblem(ds, shards, noise=noise, n_classes=k), test
    return MLPProblem(ds, shards, hidden=ps.hidden, noise=noise, n_classes=k,
                      probe_seed=ps.problem_seed), test


def initial_point(prob: Problem, seed: int) -> np.ndarray:
    if isinstance(prob, MLPProblem):
        return prob.init_vector(seed)
    return np.zeros(prob.p)


def start_point(algorithm: str, reg: Regularizer, fed: FedConfig, x0: np.ndarray) -> np.ndarray:
    """Initial ``z`` for ``algorithm`` such that every method starts from the same model ``x0``.

    FedNMap reads its model as ``prox_gamma(z)`` and Zhang as ``prox_eta_hat(z)``,
    so ``x0`` is lifted with the matching prox parameter.
    """
    if algorithm == "fednmap":
        return reg.lift(fed.gamma, x0)
    if algorithm == "zhang":
        return reg.lift(fed.eta_hat, x0)
    return np.array(x0, dtype=np.float64, copy=True)


def certified_psi_star(prob: Problem, reg: Regularizer, gamma: float) -> float | None:
    """``psi*`` from the reference solver, only where strong convexity makes it unique."""
    if reg.rho != 0:
        return None
    if isinstance(prob, QuadraticProblem):
        if prob.mu_f + reg.strong_convexity <= 0:
            return None
        sol = reference_solve(prob, reg, gamma)
    elif isinstance(prob, LogisticProblem) and reg.strong_convexity > 0:
        sol = reference_solve(prob, reg, gamma, tol=1e-9, max_iter=20_000)
    else:
        return None
    if not sol.converged or sol.agreement > 1e-8:
        return None
    return sol.psi_star


def _psi_lower_bound(prob: Problem, certified: float | None) -> float:
    """A lower bound on ``psi*`` for the initial gap in the ``theorem1`` schedule.

    The built-in regularizers are nonnegative, so ``min f`` bounds ``psi*``
    from below; cross-entropy losses are nonnegative themselves.
    """
    if certified is not None:
        return certified
    if isinstance(prob, QuadraticProblem):
        H = prob.mean_hessian
        b = ordered_sum(prob.b) / prob.n
        if prob.mu_f > 0:
            return float(-0.5 * b @ np.linalg.solve(H, b))
        raise ValueError("theorem1 schedule on a singular quadratic needs a certified psi*")
    return 0.0


@dataclass(frozen=True)
class Resolved:
    spec: RunSpec
    prob: Problem
    test: Dataset | None
    x0: np.ndarray
    psi_star: float | None
    schedule: Schedule | None


def resolve(spec: RunSpec) -> Resolved:
    """Build the problem, ``psi*`` and, for theorem schedules, the final step sizes."""
    prob, test = build_problem(spec.problem, spec.fed.n)
    reg = spec.regularizer
    x0 = initial_point(prob, spec.seed)
    fed = spec.fed
    if spec.eta_a_over_Q is not None:
        # local step scaled with Q so that sweeps over Q keep eta_a Q fixed
        fed = fed.replace(eta_a=spec.eta_a_over_Q / fed.Q)
        spec = replace(spec, fed=fed, eta_a_over_Q=None)
    sched = None
    psi_star = None
    psi_star_gamma = None
    if spec.schedule != "manual":
        L = prob.L_bound
        if spec.schedule == "theorem1":
            sched_gamma = 1.0 / (5.0 * (L + reg.rho))
            certified = certified_psi_star(prob, reg, sched_gamma)
            if spec.problem.psi_star == "auto":
                psi_star, psi_star_gamma = certified, sched_gamma
            psi0 = psi_value(prob, reg, x0)
            delta = max(float(psi0) - _psi_lower_bound(prob, certified), 1e-12)
            sigma = (spec.problem.sigma if isinstance(prob.noise, AdditiveGaussian)
                     else math.sqrt(estimate_sigma_sq(prob, x0, seed=spec.seed)))
            sched = theorem1_params(L, reg.rho, sigma, max(fed.T, 1), fed.n, fed.Q, delta)
        else:
            mu = reg.strong_convexity
            if mu <= 0:
                raise ValueError("theorem2 schedule needs a certified PL modulus (elastic net with nu2 > 0)")
            sched = theorem2_params(L, reg.rho, mu, fed.n, fed.Q, max(fed.T, 1), eta_s=fed.eta_s)
        fed = fed.replace(**sched.fed_kwargs())
        spec = replace(spec, fed=fed, schedule="manual")
    if spec.problem.psi_star == "auto" and psi_star_gamma != fed.gamma:
        psi_star = certified_psi_star(prob, reg, fed.gamma)
    return Resolved(spec, prob, test, x0, psi_star, sched)


# -- running ------------------------------------------------------------------

def _record(res: Resolved, alg, t: int, uplink_total: int, t0: int) -> MetricsRecord:
    spec, prob, reg, fed = res.spec, res.prob, res.spec.regularizer, res.spec.fed
    z, x = alg.z, alg.x
    g = prob.gradient(x)
    fnat = natural_map(prob, reg, fed.gamma, x, grad=g)
    gam = alg.metric_gamma
    fnor = g + (z - x) / gam
    fnor_sq = float(fnor @ fnor)
    train_loss = prob.f_value(x)
    phi = reg.value(x)
    psi = math.inf if phi is INFINITY else train_loss + phi
    gap = None if res.psi_star is None else psi - res.psi_star
    H = psi + 0.5 * gam * lyapunov_constant(gam, reg.rho, prob.L_bound) * fnor_sq
    acc = prob.accuracy(x, res.test) if res.test is not None else None
    return MetricsRecord(
        round=t, algo=spec.algorithm, n=fed.n, Q=fed.Q, seed=spec.seed, gamma=fed.gamma,
        eta_a=fed.eta_a, eta_s=fed.eta_s, fnat_sq=float(fnat @ fnat), fnor_sq=fnor_sq, psi=psi,
        psi_gap=gap, lyapunov=H, train_loss=train_loss, test_acc=acc, uplink_bytes=uplink_total,
        wall_ns=(time.perf_counter_ns() - t0) if spec.timing else None,
    )


def _execute(res: Resolved, oracle, keep_traces: bool = False) -> RunResult:
    spec = res.spec
    fed = spec.fed
    alg = make_algorithm(spec.algorithm, res.prob, spec.regularizer, fed,
                         start_point(spec.algorithm, spec.regularizer, fed, res.x0))
    per_round = alg.uplink_bytes()
    t0 = time.perf_counter_ns()
    records = [_record(res, alg, 0, 0, t0)]
    traces = [] if keep_traces else None
    diverged = False
    executor = ThreadPoolExecutor(max_workers=spec.workers) if spec.workers > 1 else None
    try:
        for t in range(fed.T):
            trace = alg.step(oracle, executor, trace=keep_traces)
            if traces is not None:
                traces.append(trace)
            done = t + 1
            nrm = float(np.linalg.norm(alg.z))
            if not np.isfinite(nrm) or nrm > DIVERGENCE_NORM:
                diverged = True
            if diverged or done % spec.metrics_every == 0 or done == fed.T:
                records.append(_record(res, alg, done, done * per_round, t0))
            if diverged:
                break
    finally:
        if executor is not None:
            executor.shutdown()
    return RunResult(spec=spec, records=records, diverged=diverged, traces=traces,
                     final_z=alg.z.copy(), final_x=alg.x.copy(), psi_star=res.psi_star,
                     schedule=res.schedule)


def run(spec: RunSpec, keep_traces: bool = False) -> RunResult:
    """Run ``spec.fed.T`` rounds; metrics use exact gradients and never consume draws."""
    res = resolve(spec)
    oracle = LiveOracle(res.prob, res.spec.seed, record=spec.record_draws)
    result = _execute(res, oracle, keep_traces)
    result.spec = spec
    result.draws = oracle.draws
    return result


def replay(spec: RunSpec, draws: dict, keep_traces: bool = False) -> RunResult:
    """Re-run a trajectory from recorded gradient draws instead of fresh ones."""
    if not draws:
        raise DrawScheduleError("no recorded draws; run with record_draws=True")
    res = resolve(spec)
    result = _execute(res, ReplayOracle(draws), keep_traces)
    result.spec = spec
    return result


# -- sweeps ---------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    n: int
    Q: int
    seed: int
    mean_fnat_sq: float
    final_fnat_sq: float
    final_psi_gap: float | None
    gamma: float
    eta_a: float
    eta_s: float
    diverged: bool
    curve: tuple[tuple[int, float], ...] = ()


def mean_fnat_sq(records: list[MetricsRecord], T: int) -> float:
    """Average of ``||F_nat(x_t)||^2`` over the recorded rounds ``t < T``."""
    vals = [r.fnat_sq for r in records if r.round < T] or [records[-1].fnat_sq]
    return float(np.mean(vals))


def sweep(base: RunSpec, ns: Iterable[int], Qs: Iterable[int], seeds: Iterable[int]) -> list[SweepRow]:
    ns, Qs, seeds = list(ns), list(Qs), list(seeds)
    if not ns or not Qs or not seeds:
        raise ValueError("ns, Qs and seeds must be nonempty")
    rows = []
    for n in ns:
        for Q in Qs:
            for seed in seeds:
                spec = replace(base, fed=base.fed.replace(n=n, Q=Q), seed=seed, record_draws=False)
                result = run(spec)
                last = result.records[-1]
                rows.append(SweepRow(
                    n=n, Q=Q, seed=seed,
                    mean_fnat_sq=mean_fnat_sq(result.records, spec.fed.T),
                    final_fnat_sq=last.fnat_sq, final_psi_gap=last.psi_gap,
                    gamma=last.gamma, eta_a=last.eta_a, eta_s=last.eta_s, diverged=result.diverged,
                    curve=tuple((r.round, r.fnat_sq) for r in result.records),
                ))
    return rows


@dataclass(frozen=True)
class CellSummary:
    n: int
    Q: int
    seeds: int
    mean: float
    stderr: float


def summarize_sweep(rows: list[SweepRow]) -> list[CellSummary]:
    cells: dict[tuple[int, int], list[float]] = {}
    for r in rows:
        cells.setdefault((r.n, r.Q), []).append(r.mean_fnat_sq)
    out = []
    for (n, Q), vals in cells.items():
        arr = np.asarray(vals)
        se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
        out.append(CellSummary(n, Q, arr.size, float(arr.mean()), se))
    return out


def monotone_in_nq(cells: list[CellSummary]) -> bool:
    """True if the cell mean never increases when n or Q grows with the other fixed."""
    by = {(c.n, c.Q): c.mean for c in cells}
    for (n, Q), m in by.items():
        for (n2, Q2), m2 in by.items():
            if (n2 >= n and Q2 >= Q) and (n2, Q2) != (n, Q) and m2 > m:
                return False
    return True


# -- serialisation ----------------------------------------------------------------

def metrics_csv(records: list[MetricsRecord]) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for r in records:
        w.writerow(r.as_row())
    return buf.getvalue()


def write_metrics_csv(records: list[MetricsRecord], path) -> None:
    Path(path).write_text(metrics_csv(records), encoding="utf-8")


def write_draws(path, draws: dict[tuple[int, int, int], np.ndarray]) -> None:
    """``FNMD`` + version, entry count, then ``(t, i, ell, len)`` + f64 payloads, little-endian."""
    with open(path, "wb") as fh:
        fh.write(DRAW_MAGIC)
        fh.write(struct.pack("<IQ", DRAW_VERSION, len(draws)))
        for (t, i, ell) in sorted(draws):
            arr = np.ascontiguousarray(draws[(t, i, ell)], dtype="<f8")
            fh.write(struct.pack("<IIIQ", t, i, ell, arr.size))
            fh.write(arr.tobytes())


def read_draws(path) -> dict[tuple[int, int, int], np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != DRAW_MAGIC:
        raise ValueError(f"{path}: not a draw file (bad magic)")
    version, count = struct.unpack_from("<IQ", raw, 4)
    if version != DRAW_VERSION:
        raise ValueError(f"{path}: unsupported draw file version {version}")
    off = 4 + struct.calcsize("<IQ")
    entry = struct.calcsize("<IIIQ")
    draws = {}
    for _ in range(count):
        if off + entry > len(raw):
            raise ValueError(f"{path}: truncated draw file")
        t, i, ell, size = struct.unpack_from("<IIIQ", raw, off)
        off += entry
        if off + 8 * size > len(raw):
            raise ValueError(f"{path}: truncated draw file")
        draws[(t, i, ell)] = np.frombuffer(raw, dtype="<f8", count=size, offset=off).astype(np.float64)
        off += 8 * size
    return draws
