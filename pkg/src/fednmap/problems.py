"""Per-client smooth losses with exact and stochastic gradient oracles.

Three families share one interface:

* :class:`QuadraticProblem` -- ``f_i(x) = 0.5 x'A_i x - b_i'x`` with PSD ``A_i``.
* :class:`LogisticProblem` -- multinomial softmax regression on a client shard.
* :class:`MLPProblem` -- one sigmoid hidden layer followed by softmax.

Model vectors for the data-driven problems are flat float64 arrays laid out
as ``W1`` (row-major), ``b1``, ``W2`` (row-major), ``b2`` for the MLP and
``W`` (row-major), ``b`` for logistic regression.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._validation import as_vector, check_client, check_count, check_positive
from .data import ClientShard, Dataset, EmptyShardError
from .rng import Purpose, RngStream

__all__ = [
    "AdditiveGaussian",
    "LogisticProblem",
    "MLPProblem",
    "Minibatch",
    "Problem",
    "QuadraticProblem",
    "estimate_sigma_sq",
    "make_composite_quadratic",
    "power_iteration",
]


@dataclass(frozen=True)
class Minibatch:
    batch_size: int

    def __post_init__(self):
        check_count(self.batch_size, "batch_size")


@dataclass(frozen=True)
class AdditiveGaussian:
    """``g = grad f_i(x) + N(0, sigma^2/p I)`` so that ``E||g - grad f_i||^2 = sigma^2``."""

    sigma: float = 0.0

    def __post_init__(self):
        check_positive(self.sigma, "sigma", strict=False)


def _generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def power_iteration(M: np.ndarray, tol: float = 1e-14, max_iter: int = 200_000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix via Rayleigh-quotient power iteration."""
    M = np.asarray(M, dtype=np.float64)
    p = M.shape[0]
    # deterministic start with every eigen-direction represented
    v = np.ones(p) + np.linspace(0.0, 1.0, p) ** 2
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = M @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v_new = w / nrm
        lam_new = float(v_new @ (M @ v_new))
        converged = abs(lam_new - lam) <= tol * max(1.0, abs(lam_new))
        v, lam = v_new, lam_new
        if converged and np.linalg.norm(M @ v - lam * v) <= 1e-7 * max(1.0, abs(lam)):
            break
    return lam


class Problem:
    """Common surface: ``n`` clients sharing a ``p``-dimensional model."""

    kind = "abstract"
    n: int
    p: int
    noise: Minibatch | AdditiveGaussian

    # subclasses provide _loss_grad(i, x, idx=None) -> (loss, grad)

    def _check(self, i, x) -> tuple[int, np.ndarray]:
        return check_client(i, self.n), as_vector(x, dim=self.p)

    def loss(self, i, x) -> float:
        i, x = self._check(i, x)
        return self._loss_grad(i, x)[0]

    def full_gradient(self, i, x) -> np.ndarray:
        i, x = self._check(i, x)
        return self._loss_grad(i, x)[1]

    def f_value(self, x) -> float:
        x = as_vector(x, dim=self.p)
        total = 0.0
        for i in range(self.n):
            total += self._loss_grad(i, x)[0]
        return total / self.n

    def gradient(self, x) -> np.ndarray:
        """Exact gradient of ``f = (1/n) sum_i f_i`` (clients summed in index order)."""
        x = as_vector(x, dim=self.p)
        acc = np.zeros(self.p)
        for i in range(self.n):
            acc += self._loss_grad(i, x)[1]
        return acc / self.n

    def stochastic_gradient(self, i, x, rng) -> np.ndarray:
        i, x = self._check(i, x)
        if isinstance(self.noise, AdditiveGaussian):
            g = self._loss_grad(i, x)[1]
            if self.noise.sigma == 0:
                return g
            noise = rng.standard_normal(self.p) if isinstance(rng, RngStream) else \
                _generator(rng).standard_normal(self.p)
            return g + (self.noise.sigma / np.sqrt(self.p)) * noise
        return self._minibatch_gradient(i, x, _generator(rng))

    def _minibatch_gradient(self, i, x, gen):
        raise TypeError(f"{self.kind} problems do not support minibatch noise")

    @property
    def L_bound(self) -> float:
        raise NotImplementedError


class QuadraticProblem(Problem):
    kind = "quadratic"

    def __init__(self, A, b, noise: AdditiveGaussian | None = None):
        A = np.asarray(A, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValueError(f"A must have shape (n, p, p), got {A.shape}")
        if b.shape != A.shape[:2]:
            raise ValueError(f"b must have shape {A.shape[:2]}, got {b.shape}")
        if not np.allclose(A, np.transpose(A, (0, 2, 1)), rtol=0, atol=1e-12):
            raise ValueError("every A_i must be symmetric")
        for Ai in A:
            if np.linalg.eigvalsh(Ai)[0] < -1e-10:
                raise ValueError("every A_i must be positive semidefinite")
        self.A, self.b = A, b
        self.n, self.p = A.shape[0], A.shape[1]
        noise = AdditiveGaussian(0.0) if noise is None else noise
        if not isinstance(noise, AdditiveGaussian):
            raise TypeError("quadratic problems only support additive Gaussian noise")
        self.noise = noise

    def _loss_grad(self, i, x, idx=None):
        Ax = self.A[i] @ x
        return 0.5 * float(x @ Ax) - float(self.b[i] @ x), Ax - self.b[i]

    @cached_property
    def L_bound(self) -> float:
        return max(power_iteration(Ai) for Ai in self.A)

    @cached_property
    def mean_hessian(self) -> np.ndarray:
        acc = np.zeros((self.p, self.p))
        for Ai in self.A:
            acc += Ai
        return acc / self.n

    @cached_property
    def mu_f(self) -> float:
        """Smallest eigenvalue of the averaged Hessian (strong convexity of f)."""
        return max(float(np.linalg.eigvalsh(self.mean_hessian)[0]), 0.0)


def make_composite_quadratic(
    n: int,
    p: int,
    hetero: float,
    seed: int,
    *,
    diag=None,
    b=None,
    noise: AdditiveGaussian | None = None,
) -> QuadraticProblem:
    """Random heterogeneous quadratics ``A_i = D + hetero * S_i``.

    ``D`` defaults to ``diag(linspace(1, 4, p))``; ``S_i = G_i G_i' / p`` with
    Gaussian ``G_i`` drawn from client ``i``'s own stream, so adding clients
    never changes the existing ones. Linear terms are ``b_i = b + hetero * e_i``.
    """
    n = check_count(n, "n")
    p = check_count(p, "p")
    hetero = check_positive(hetero, "hetero", strict=False)
    D = np.linspace(1.0, 4.0, p) if diag is None else as_vector(diag, dim=p, name="diag")
    if np.any(D < 0):
        raise ValueError("diag entries must be nonnegative")
    if b is None:
        base = RngStream(seed, purpose=Purpose.PROBLEM, step=1).generator().standard_normal(p)
    else:
        base = as_vector(b, dim=p, name="b")
    A = np.empty((n, p, p))
    B = np.empty((n, p))
    for i in range(n):
        gen = RngStream(seed, client=i, purpose=Purpose.PROBLEM).generator()
        G = gen.standard_normal((p, p))
        S = G @ G.T / p
        S = 0.5 * (S + S.T)
        A[i] = np.diag(D) + hetero * S
        B[i] = base + hetero * gen.standard_normal(p)
    return QuadraticProblem(A, B, noise)


def _softmax_xent(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    Z = expz.sum(axis=1, keepdims=True)
    P = expz / Z
    rows = np.arange(len(y))
    loss = float(np.mean(np.log(Z[:, 0]) - shifted[rows, y]))
    P[rows, y] -= 1.0
    return loss, P / len(y)


class _DataProblem(Problem):
    def __init__(self, dataset: Dataset, shards: list[ClientShard], noise, n_classes=None):
        if not shards:
            raise ValueError("at least one client shard is required")
        for s in shards:
            if len(s) == 0:
                raise EmptyShardError(f"client {s.owner} has an empty shard")
        self.dataset = dataset
        self.shards = list(shards)
        self.n = len(shards)
        self.d = dataset.n_features
        self.k = int(n_classes) if n_classes is not None else max(dataset.n_classes, 2)
        self.noise = Minibatch(32) if noise is None else noise
        self._X = [dataset.features[s.sample_indices] for s in shards]
        self._y = [dataset.labels[s.sample_indices].astype(np.intp) for s in shards]

    def _loss_grad(self, i, x, idx=None):
        X, y = self._X[i], self._y[i]
        if idx is not None:
            X, y = X[idx], y[idx]
        return self._evaluate(x, X, y)

    def _minibatch_gradient(self, i, x, gen):
        size = self._X[i].shape[0]
        if size == 0:
            raise EmptyShardError(f"client {i} has an empty shard")
        if self.noise.batch_size >= size:
            return self._loss_grad(i, x)[1]
        idx = gen.integers(0, size, self.noise.batch_size)
        return self._loss_grad(i, x, idx)[1]

    def logits(self, x, X) -> np.ndarray:
        return self._logits(as_vector(x, dim=self.p), np.asarray(X, dtype=np.float64))

    def predict(self, x, X) -> np.ndarray:
        return np.argmax(self.logits(x, X), axis=1)

    def accuracy(self, x, dataset: Dataset) -> float:
        return float(np.mean(self.predict(x, dataset.features) == dataset.labels))


class LogisticProblem(_DataProblem):
    kind = "logistic"

    def __init__(self, dataset, shards, noise=None, n_classes=None):
        super().__init__(dataset, shards, noise, n_classes)
        self.p = self.k * self.d + self.k

    def _unpack(self, x):
        kd = self.k * self.d
        return x[:kd].reshape(self.k, self.d), x[kd:]

    def _logits(self, x, X):
        W, b = self._unpack(x)
        return X @ W.T + b

    def _evaluate(self, x, X, y):
        loss, dlogits = _softmax_xent(self._logits(x, X), y)
        return loss, np.concatenate([(dlogits.T @ X).ravel(), dlogits.sum(axis=0)])

    @cached_property
    def L_bound(self) -> float:
        # softmax Hessian <= 1/2 (I kron X~'X~/N), X~ = [X, 1]
        best = 0.0
        for X in self._X:
            Xt = np.hstack([X, np.ones((X.shape[0], 1))])
            best = max(best, power_iteration(Xt.T @ Xt) / (2.0 * X.shape[0]))
        return best

    def init_vector(self, seed: int) -> np.ndarray:
        return np.zeros(self.p)


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


class MLPProblem(_DataProblem):
    kind = "mlp"

    def __init__(self, dataset, shards, hidden: int = 32, noise=None, n_classes=None,
                 n_probes: int = 1000, probe_seed: int = 0):
        super().__init__(dataset, shards, noise, n_classes)
        self.h = check_count(hidden, "hidden")
        self.p = self.h * self.d + self.h + self.k * self.h + self.k
        self.n_probes = n_probes
        self.probe_seed = probe_seed

    def _unpack(self, x):
        h, d, k = self.h, self.d, self.k
        o1 = h * d
        o2 = o1 + h
        o3 = o2 + k * h
        return x[:o1].reshape(h, d), x[o1:o2], x[o2:o3].reshape(k, h), x[o3:]

    def _logits(self, x, X):
        W1, b1, W2, b2 = self._unpack(x)
        return _sigmoid(X @ W1.T + b1) @ W2.T + b2

    def _evaluate(self, x, X, y):
        W1, b1, W2, b2 = self._unpack(x)
        s = _sigmoid(X @ W1.T + b1)
        loss, dlogits = _softmax_xent(s @ W2.T + b2, y)
        da = (dlogits @ W2) * s * (1.0 - s)
        return loss, np.concatenate([
            (da.T @ X).ravel(), da.sum(axis=0), (dlogits.T @ s).ravel(), dlogits.sum(axis=0),
        ])

    def init_vector(self, seed: int, scale: float | None = None) -> np.ndarray:
        """Glorot-style uniform weights, zero biases."""
        gen = RngStream(seed, purpose=Purpose.INIT).generator()
        r1 = np.sqrt(6.0 / (self.d + self.h)) if scale is None else scale
        r2 = np.sqrt(6.0 / (self.h + self.k)) if scale is None else scale
        W1 = gen.uniform(-r1, r1, self.h * self.d)
        W2 = gen.uniform(-r2, r2, self.k * self.h)
        return np.concatenate([W1, np.zeros(self.h), W2, np.zeros(self.k)])

    @cached_property
    def L_bound(self) -> float:
        """Empirical estimate: twice the largest gradient-difference ratio over probe pairs."""
        gen = RngStream(self.probe_seed, purpose=Purpose.PROBE).generator()
        best = 0.0
        for j in range(self.n_probes):
            i = j % self.n
            x = self.init_vector(self.probe_seed + j + 1)
            delta = gen.standard_normal(self.p) * 1e-2 / np.sqrt(self.p)
            g1 = self._loss_grad(i, x)[1]
            g2 = self._loss_grad(i, x + delta)[1]
            best = max(best, np.linalg.norm(g1 - g2) / np.linalg.norm(delta))
        return 2.0 * best


def estimate_sigma_sq(prob: Problem, x, seed: int = 0, draws: int = 64) -> float:
    """Empirical ``E||g_i(x) - grad f_i(x)||^2``, averaged over clients.

    An estimate only: the bound in the convergence theory is a supremum over
    ``x``, which cannot be measured.
    """
    x = as_vector(x, dim=prob.p)
    total = 0.0
    for i in range(prob.n):
        g = prob.full_gradient(i, x)
        for k in range(draws):
            dev = prob.stochastic_gradient(i, x, RngStream(seed, client=i, draw=k, purpose=Purpose.PROBE)) - g
            total += float(dev @ dev)
    return total / (prob.n * draws)
