"""FedNMap and the two drift-corrected baselines it is compared against.

All three methods run with full client participation. Gradient draws come
from an *oracle* ``oracle(i, t, ell, x) -> g`` so the same code runs live
(fresh counter-based draws), while recording, or replaying recorded draws.

Client work inside a round depends only on the downlink and the client's own
state, so it may be fanned out to an executor; every aggregation sums client
contributions in ascending client index to keep results bit-reproducible.
"""

from __future__ import annotations

import copy
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from ._validation import DimensionMismatchError, check_count, check_positive, check_same_shape
from .problems import Problem
from .regularizers import Regularizer
from .rng import gradient_stream

__all__ = [
    "ALGORITHMS",
    "ClientState",
    "DownLink",
    "FedConfig",
    "FedNMap",
    "LiveOracle",
    "MissingUplinkError",
    "ReplayOracle",
    "Scaffold",
    "ScaffoldUplink",
    "ServerState",
    "UplinkMessage",
    "Zhang",
    "correction_update",
    "fednmap_client_round",
    "fednmap_server_step",
    "ordered_sum",
]


class MissingUplinkError(ValueError):
    pass


class DrawScheduleError(KeyError):
    pass


@dataclass(frozen=True)
class FedConfig:
    n: int
    Q: int
    T: int
    eta_a: float
    eta_s: float
    gamma: float
    eta_hat: float = field(init=False)

    def __post_init__(self):
        check_count(self.n, "n")
        check_count(self.Q, "Q")
        check_count(self.T, "T", minimum=0)
        check_positive(self.eta_a, "eta_a")
        check_positive(self.eta_s, "eta_s")
        check_positive(self.gamma, "gamma")
        object.__setattr__(self, "eta_hat", self.eta_a * self.eta_s * self.Q)

    def check_against(self, reg: Regularizer) -> None:
        reg.check_gamma(self.gamma)

    def replace(self, **changes) -> "FedConfig":
        fields = dict(n=self.n, Q=self.Q, T=self.T, eta_a=self.eta_a, eta_s=self.eta_s, gamma=self.gamma)
        fields.update(changes)
        return FedConfig(**fields)


class GradientOracle(Protocol):
    def __call__(self, i: int, t: int, ell: int, x: np.ndarray) -> np.ndarray: ...


class LiveOracle:
    """Fresh draws from lane ``(seed, i, t, ell)``; optionally records them."""

    def __init__(self, prob: Problem, seed: int, record: bool = False):
        self.prob = prob
        self.seed = seed
        self.draws: dict[tuple[int, int, int], np.ndarray] | None = {} if record else None

    def __call__(self, i, t, ell, x):
        g = self.prob.stochastic_gradient(i, x, gradient_stream(self.seed, i, t, ell))
        if self.draws is not None:
            self.draws[(t, i, ell)] = g.copy()
        return g


class ReplayOracle:
    """Serves recorded draws keyed ``(t, i, ell)``; the query point is ignored."""

    def __init__(self, draws: dict[tuple[int, int, int], np.ndarray], p: int | None = None):
        self.draws = draws
        self.p = p

    def __call__(self, i, t, ell, x):
        try:
            g = self.draws[(t, i, ell)]
        except KeyError:
            raise DrawScheduleError(f"no recorded draw for (t={t}, i={i}, ell={ell})") from None
        if g.shape != x.shape:
            raise DrawScheduleError(f"draw (t={t}, i={i}, ell={ell}) has shape {g.shape}, expected {x.shape}")
        return g.copy()


def ordered_sum(vectors) -> np.ndarray:
    """Left-to-right sum; fixed order keeps floating-point results reproducible."""
    it = iter(vectors)
    acc = np.array(next(it), dtype=np.float64, copy=True)
    for v in it:
        acc += v
    return acc


def _map(executor: Executor | None, fn: Callable, items):
    if executor is None:
        return [fn(item) for item in items]
    return list(executor.map(fn, items))


# -- FedNMap -----------------------------------------------------------------

@dataclass(frozen=True)
class UplinkMessage:
    y: np.ndarray

    @property
    def byte_count(self) -> int:
        return self.y.size * 8


@dataclass(frozen=True)
class DownLink:
    z: np.ndarray
    y_bar_prev: np.ndarray | None
    round: int


@dataclass
class ClientState:
    c: np.ndarray
    y_last: np.ndarray | None = None


@dataclass
class ServerState:
    z: np.ndarray
    x: np.ndarray
    y_bar_prev: np.ndarray | None
    round: int = 0

    def downlink(self) -> DownLink:
        return DownLink(self.z, self.y_bar_prev, self.round)


def correction_update(c_prev, y_prev, y_bar_prev, t: int) -> np.ndarray:
    """``c_{i,t} = c_{i,t-1} - y_{i,t-1} + mean_j y_{j,t-1}``, and zero at ``t = 0``."""
    if t == 0:
        return np.zeros_like(np.asarray(c_prev, dtype=np.float64))
    check_same_shape(c_prev, y_prev, y_bar_prev, names=("c_prev", "y_prev", "y_bar_prev"))
    return c_prev - y_prev + y_bar_prev


@dataclass(frozen=True)
class ClientRound:
    message: UplinkMessage
    state: ClientState
    grads: np.ndarray  # (Q, p) draws consumed, in local-step order


def fednmap_client_round(prob: Problem, reg: Regularizer, cfg: FedConfig, i: int,
                         downlink: DownLink, state: ClientState, oracle: GradientOracle) -> ClientRound:
    t = downlink.round
    z_t = downlink.z
    if z_t.shape != (prob.p,):
        raise DimensionMismatchError(f"downlink z has shape {z_t.shape}, expected ({prob.p},)")
    if t == 0:
        c = correction_update(state.c, None, None, 0)
    else:
        if downlink.y_bar_prev is None or state.y_last is None:
            raise ValueError("rounds t >= 1 need the previous local and aggregated directions")
        c = correction_update(state.c, state.y_last, downlink.y_bar_prev, t)
    x_t = reg.prox(cfg.gamma, z_t)
    shift = (z_t - x_t) / cfg.gamma
    z = z_t.copy()
    grads = np.empty((cfg.Q, prob.p))
    for ell in range(cfg.Q):
        x = reg.prox(cfg.gamma, z)
        g = oracle(i, t, ell, x)
        grads[ell] = g
        z = z - cfg.eta_a * (g + shift + c)
    y = (z_t - z) / (cfg.eta_a * cfg.Q)
    return ClientRound(UplinkMessage(y), ClientState(c=c, y_last=y), grads)


def fednmap_server_step(cfg: FedConfig, reg: Regularizer, state: ServerState,
                        uplinks: list[UplinkMessage]) -> ServerState:
    if len(uplinks) != cfg.n:
        raise MissingUplinkError(f"expected {cfg.n} uplinks, got {len(uplinks)}")
    total = ordered_sum(m.y for m in uplinks)
    z = state.z - (cfg.Q * cfg.eta_s * cfg.eta_a / cfg.n) * total
    return ServerState(z=z, x=reg.prox(cfg.gamma, z), y_bar_prev=total / cfg.n, round=state.round + 1)


@dataclass(frozen=True)
class RoundTrace:
    """What one round consumed and produced, for identity checks."""

    round: int
    z: np.ndarray           # z_t before the server step
    x: np.ndarray           # x_t
    ys: np.ndarray          # (n, p) uplinked directions
    cs: np.ndarray          # (n, p) corrections used in this round
    grads: np.ndarray       # (n, Q, p) gradient draws


class FedNMap:
    name = "fednmap"
    uplink_vectors = 1

    def __init__(self, prob: Problem, reg: Regularizer, cfg: FedConfig, z0=None):
        cfg.check_against(reg)
        if cfg.n != prob.n:
            raise ValueError(f"config has n={cfg.n} but the problem has {prob.n} clients")
        self.prob, self.reg, self.cfg = prob, reg, cfg
        z0 = np.zeros(prob.p) if z0 is None else np.asarray(z0, dtype=np.float64).copy()
        self.server = ServerState(z=z0, x=reg.prox(cfg.gamma, z0), y_bar_prev=None, round=0)
        self.clients = [ClientState(c=np.zeros(prob.p)) for _ in range(cfg.n)]

    @property
    def z(self):
        return self.server.z

    @property
    def x(self):
        return self.server.x

    @property
    def round(self):
        return self.server.round

    @property
    def metric_gamma(self):
        return self.cfg.gamma

    def step(self, oracle: GradientOracle, executor: Executor | None = None,
             trace: bool = True) -> RoundTrace | None:
        down = self.server.downlink()

        def work(i):
            return fednmap_client_round(self.prob, self.reg, self.cfg, i, down, self.clients[i], oracle)

        results = _map(executor, work, range(self.cfg.n))
        msgs = [r.message for r in results]
        out = None
        if trace:
            out = RoundTrace(
                round=down.round, z=self.server.z, x=self.server.x,
                ys=np.stack([m.y for m in msgs]),
                cs=np.stack([r.state.c for r in results]),
                grads=np.stack([r.grads for r in results]),
            )
        self.server = fednmap_server_step(self.cfg, self.reg, self.server, msgs)
        self.clients = [r.state for r in results]
        return out

    def uplink_bytes(self) -> int:
        return self.cfg.n * UplinkMessage(np.zeros(self.prob.p)).byte_count

    def snapshot(self) -> dict:
        return copy.deepcopy({"server": self.server, "clients": self.clients})

    def restore(self, snap: dict) -> None:
        snap = copy.deepcopy(snap)
        self.server, self.clients = snap["server"], snap["clients"]


# -- Zhang et al. baseline ---------------------------------------------------

@dataclass
class ZhangServerState:
    z: np.ndarray
    x: np.ndarray
    round: int = 0


class Zhang:
    """Composite FL with a gradient-tracking correction and prox weight ``(ell+1) eta_a``.

    Clients start local steps from ``x_t = prox_{eta_hat phi}(z_t)``; the
    server averages the final local ``z`` and re-proxes with ``eta_hat``.
    """

    name = "zhang"
    uplink_vectors = 1

    def __init__(self, prob: Problem, reg: Regularizer, cfg: FedConfig, z0=None):
        reg.check_gamma(cfg.eta_hat)
        reg.check_gamma(cfg.Q * cfg.eta_a)
        if cfg.n != prob.n:
            raise ValueError(f"config has n={cfg.n} but the problem has {prob.n} clients")
        self.prob, self.reg, self.cfg = prob, reg, cfg
        z0 = np.zeros(prob.p) if z0 is None else np.asarray(z0, dtype=np.float64).copy()
        self.server = ZhangServerState(z=z0, x=reg.prox(cfg.eta_hat, z0))
        self.c = [np.zeros(prob.p) for _ in range(cfg.n)]

    @property
    def z(self):
        return self.server.z

    @property
    def x(self):
        return self.server.x

    @property
    def round(self):
        return self.server.round

    @property
    def metric_gamma(self):
        return self.cfg.eta_hat

    def _client(self, i, x_t, t, oracle):
        cfg, reg = self.cfg, self.reg
        z = x_t.copy()
        x = x_t.copy()
        c = self.c[i]
        grads = np.empty((cfg.Q, self.prob.p))
        for ell in range(cfg.Q):
            g = oracle(i, t, ell, x)
            grads[ell] = g
            z = z - cfg.eta_a * (g + c)
            x = reg.prox((ell + 1) * cfg.eta_a, z)
        return z, grads

    def step(self, oracle: GradientOracle, executor: Executor | None = None,
             trace: bool = True) -> RoundTrace | None:
        cfg = self.cfg
        t, z_t, x_t = self.server.round, self.server.z, self.server.x
        results = _map(executor, lambda i: self._client(i, x_t, t, oracle), range(cfg.n))
        zQ = [r[0] for r in results]
        out = None
        if trace:
            out = RoundTrace(round=t, z=z_t, x=x_t,
                             ys=np.stack([(x_t - zq) / (cfg.eta_a * cfg.Q) for zq in zQ]),
                             cs=np.stack(self.c), grads=np.stack([r[1] for r in results]))
        z_next = x_t + cfg.eta_s * (ordered_sum(zQ) / cfg.n - x_t)
        self.c = [(x_t - z_next) / cfg.eta_hat - r[1].mean(axis=0) for r in results]
        self.server = ZhangServerState(z=z_next, x=self.reg.prox(cfg.eta_hat, z_next), round=t + 1)
        return out

    def uplink_bytes(self) -> int:
        return self.cfg.n * UplinkMessage(np.zeros(self.prob.p)).byte_count

    def snapshot(self) -> dict:
        return copy.deepcopy({"server": self.server, "c": self.c})

    def restore(self, snap: dict) -> None:
        snap = copy.deepcopy(snap)
        self.server, self.c = snap["server"], snap["c"]


# -- SCAFFOLD ------------------------------------------------------------------

@dataclass(frozen=True)
class ScaffoldUplink:
    delta_x: np.ndarray
    delta_c: np.ndarray

    @property
    def byte_count(self) -> int:
        return (self.delta_x.size + self.delta_c.size) * 8


@dataclass
class ScaffoldServerState:
    x: np.ndarray
    c: np.ndarray
    round: int = 0


class Scaffold:
    """SCAFFOLD with control variates initialised to zero; smooth problems only."""

    name = "scaffold"
    uplink_vectors = 2

    def __init__(self, prob: Problem, cfg: FedConfig, x0=None, reg: Regularizer | None = None):
        if reg is not None and not reg.is_zero:
            raise ValueError("SCAFFOLD handles smooth problems only (phi must be zero)")
        if cfg.n != prob.n:
            raise ValueError(f"config has n={cfg.n} but the problem has {prob.n} clients")
        self.prob, self.cfg = prob, cfg
        x0 = np.zeros(prob.p) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
        self.server = ScaffoldServerState(x=x0, c=np.zeros(prob.p))
        self.c = [np.zeros(prob.p) for _ in range(cfg.n)]

    @property
    def z(self):
        return self.server.x

    @property
    def x(self):
        return self.server.x

    @property
    def round(self):
        return self.server.round

    @property
    def metric_gamma(self):
        return self.cfg.gamma

    def _client(self, i, x_t, c_t, t, oracle):
        cfg = self.cfg
        x = x_t.copy()
        c_i = self.c[i]
        grads = np.empty((cfg.Q, self.prob.p))
        for ell in range(cfg.Q):
            g = oracle(i, t, ell, x)
            grads[ell] = g
            x = x - cfg.eta_a * (g - c_i + c_t)
        c_new = c_i - c_t + (x_t - x) / (cfg.eta_a * cfg.Q)
        return ScaffoldUplink(delta_x=x - x_t, delta_c=c_new - c_i), c_new, grads

    def step(self, oracle: GradientOracle, executor: Executor | None = None,
             trace: bool = True) -> RoundTrace | None:
        cfg = self.cfg
        t, x_t, c_t = self.server.round, self.server.x, self.server.c
        results = _map(executor, lambda i: self._client(i, x_t, c_t, t, oracle), range(cfg.n))
        msgs = [r[0] for r in results]
        self.last_uplinks = msgs
        out = None
        if trace:
            out = RoundTrace(round=t, z=x_t, x=x_t,
                             ys=np.stack([-m.delta_x / (cfg.eta_a * cfg.Q) for m in msgs]),
                             cs=np.stack(self.c), grads=np.stack([r[2] for r in results]))
        x_next = x_t + (cfg.eta_s / cfg.n) * ordered_sum(m.delta_x for m in msgs)
        c_next = c_t + ordered_sum(m.delta_c for m in msgs) / cfg.n
        self.c = [r[1] for r in results]
        self.server = ScaffoldServerState(x=x_next, c=c_next, round=t + 1)
        return out

    def uplink_bytes(self) -> int:
        zeros = np.zeros(self.prob.p)
        return self.cfg.n * ScaffoldUplink(zeros, zeros).byte_count

    def snapshot(self) -> dict:
        return copy.deepcopy({"server": self.server, "c": self.c})

    def restore(self, snap: dict) -> None:
        snap = copy.deepcopy(snap)
        self.server, self.c = snap["server"], snap["c"]


ALGORITHMS = {"fednmap": FedNMap, "zhang": Zhang, "scaffold": Scaffold}


def make_algorithm(name: str, prob: Problem, reg: Regularizer, cfg: FedConfig, z0=None):
    if name == "scaffold":
        return Scaffold(prob, cfg, z0, reg=reg)
    try:
        cls = ALGORITHMS[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; choose from {sorted(ALGORITHMS)}") from None
    return cls(prob, reg, cfg, z0)
