"""scikit-learn facade: federated training of a composite-regularized classifier.

``fit`` partitions ``(X, y)`` across simulated clients and runs one of the
federated algorithms; ``predict`` uses the final model ``x_T``. The per-round
metrics are kept in ``history_``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .algorithms import FedConfig, LiveOracle, make_algorithm
from .data import Dataset, partition_dirichlet, partition_iid, partition_sorted_by_label
from .maps import natural_map
from .problems import LogisticProblem, Minibatch, MLPProblem
from .regularizers import Regularizer
from .rng import Purpose, RngStream
from .simulator import start_point

__all__ = ["FederatedClassifier"]


class FederatedClassifier(ClassifierMixin, BaseEstimator):
    """Softmax regression or a one-hidden-layer MLP trained by federated rounds.

    Parameters mirror the run config: ``n_clients``, ``Q``, ``T``, the three
    step sizes, the elastic-net weights ``nu1``/``nu2`` and the data split.
    """

    def __init__(self, model="logistic", algorithm="fednmap", n_clients=10, Q=5, T=50,
                 eta_a=0.1, eta_s=1.0, gamma=1.0, nu1=0.0, nu2=0.0, hidden=32,
                 partition="iid", alpha=0.1, batch_size=32, random_state=0):
        self.model = model
        self.algorithm = algorithm
        self.n_clients = n_clients
        self.Q = Q
        self.T = T
        self.eta_a = eta_a
        self.eta_s = eta_s
        self.gamma = gamma
        self.nu1 = nu1
        self.nu2 = nu2
        self.hidden = hidden
        self.partition = partition
        self.alpha = alpha
        self.batch_size = batch_size
        self.random_state = random_state

    def _shards(self, ds):
        seed = RngStream(self.random_state, purpose=Purpose.PARTITION)
        if self.partition == "sorted":
            return partition_sorted_by_label(ds, self.n_clients)
        if self.partition == "dirichlet":
            return partition_dirichlet(ds, self.n_clients, self.alpha, seed)
        if self.partition == "iid":
            return partition_iid(ds, self.n_clients, seed)
        raise ValueError(f"unknown partition {self.partition!r}")

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        self.encoder_ = LabelEncoder().fit(y)
        self.classes_ = self.encoder_.classes_
        ds = Dataset(X, self.encoder_.transform(y))
        k = max(len(self.classes_), 2)
        noise = Minibatch(self.batch_size)
        if self.model == "logistic":
            prob = LogisticProblem(ds, self._shards(ds), noise=noise, n_classes=k)
        elif self.model == "mlp":
            prob = MLPProblem(ds, self._shards(ds), hidden=self.hidden, noise=noise, n_classes=k,
                              probe_seed=self.random_state)
        else:
            raise ValueError(f"unknown model {self.model!r}")
        reg = Regularizer.elastic_net(self.nu1, self.nu2) if (self.nu1 or self.nu2) else Regularizer.zero()
        cfg = FedConfig(n=self.n_clients, Q=self.Q, T=self.T, eta_a=self.eta_a,
                        eta_s=self.eta_s, gamma=self.gamma)
        x0 = prob.init_vector(self.random_state)
        alg = make_algorithm(self.algorithm, prob, reg, cfg, start_point(self.algorithm, reg, cfg, x0))
        oracle = LiveOracle(prob, self.random_state)
        history = []
        for _ in range(cfg.T):
            alg.step(oracle, trace=False)
            fnat = natural_map(prob, reg, cfg.gamma, alg.x)
            history.append(float(fnat @ fnat))
        self.problem_ = prob
        self.coef_ = alg.x.copy()
        self.history_ = np.asarray(history)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return self.problem_.logits(self.coef_, check_array(X, dtype=np.float64))

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return self.encoder_.inverse_transform(self.problem_.predict(self.coef_, check_array(X)))
