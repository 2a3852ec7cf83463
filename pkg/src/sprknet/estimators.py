"""scikit-learn style wrappers around the training loop."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .composed import TrajectoryProblem, l2_error, predict_trajectory
from .integrator import Trajectory
from .network import forward, init_params
from .tableau import BUILTIN_NAMES, PrkTableau, builtin_tableau
from .training import ClassificationProblem, LossSpec, OptimizerState, train

__all__ = ["SPRKNetClassifier", "TrajectoryForceLearner"]


def _tableau(t) -> PrkTableau:
    if isinstance(t, PrkTableau):
        return t
    if t not in BUILTIN_NAMES:
        raise ValueError(f"unknown tableau {t!r}; choose one of {', '.join(BUILTIN_NAMES)}")
    return builtin_tableau(t)


class SPRKNetClassifier(ClassifierMixin, BaseEstimator):
    """Binary classifier: features enter as ``p0`` with ``q0 = 0``; a linear
    read-out of the final phase state gives the logit."""

    def __init__(self, tableau="sprk4", layers=12, step_size=0.5, activation="tanh",
                 share_stages=True, optimizer="adam", learning_rate=1e-2, epochs=100,
                 batch_size=32, lam=0.0, random_state=0):
        self.tableau = tableau
        self.layers = layers
        self.step_size = step_size
        self.activation = activation
        self.share_stages = share_stages
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.lam = lam
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_, codes = np.unique(y, return_inverse=True)
        if len(self.classes_) != 2:
            raise ValueError(f"only binary targets are supported, got {len(self.classes_)} classes")
        self.n_features_in_ = X.shape[1]
        seed = 0 if self.random_state is None else int(self.random_state)
        net = init_params(X.shape[1], self.layers, _tableau(self.tableau), m=1, h=self.step_size,
                          activation=self.activation, share_stages=self.share_stages, rng=seed)
        problem = ClassificationProblem(X, codes, lam=self.lam)
        self.params_, self.metrics_ = train(
            net, problem, LossSpec("binary_classification", self.lam),
            OptimizerState(self.optimizer, self.learning_rate), self.epochs, self.batch_size, seed)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        out, _ = forward(self.params_, X)
        return out[:, 0]

    def predict_proba(self, X):
        z = self.decision_function(X)
        p1 = 0.5 * (1.0 + np.tanh(0.5 * z))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return self.classes_[(self.decision_function(X) > 0).astype(int)]


class TrajectoryForceLearner(BaseEstimator):
    """Learns the force in ``q' = p, p' = F(q)`` from sampled trajectories.

    ``fit`` takes a list of :class:`~sprknet.integrator.Trajectory`; the
    force network is rolled out with its own tableau.
    """

    def __init__(self, tableau="sprk4", layers=8, step_size=0.5, activation="tanh",
                 share_stages=False, optimizer="sgd", learning_rate=1e-2, epochs=270,
                 batch_size=1, lam=0.0, random_state=0):
        self.tableau = tableau
        self.layers = layers
        self.step_size = step_size
        self.activation = activation
        self.share_stages = share_stages
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.lam = lam
        self.random_state = random_state

    @staticmethod
    def _check_trajectories(trajectories) -> list[Trajectory]:
        trajs = list(trajectories)
        if not trajs or not all(isinstance(t, Trajectory) for t in trajs):
            raise TypeError("expected a non-empty sequence of Trajectory objects")
        n = trajs[0].q.shape[1]
        if any(t.q.shape[1] != n for t in trajs) or any(len(t) < 2 for t in trajs):
            raise ValueError("trajectories must share a dimension and hold at least two samples")
        return trajs

    def fit(self, trajectories, test: Trajectory | None = None):
        trajs = self._check_trajectories(trajectories)
        n = trajs[0].q.shape[1]
        seed = 0 if self.random_state is None else int(self.random_state)
        net = init_params(n, self.layers, _tableau(self.tableau), m=n, h=self.step_size,
                          activation=self.activation, share_stages=self.share_stages, rng=seed)
        problem = TrajectoryProblem(trajs, test, lam=self.lam)
        self.n_dim_ = n
        self.params_, self.metrics_ = train(
            net, problem, LossSpec("trajectory_l2", self.lam),
            OptimizerState(self.optimizer, self.learning_rate), self.epochs, self.batch_size, seed)
        return self

    def force(self, q):
        check_is_fitted(self, "params_")
        q = check_array(np.atleast_2d(q), dtype=np.float64)
        return forward(self.params_, q)[0]

    def predict(self, z0, times) -> Trajectory:
        check_is_fitted(self, "params_")
        return predict_trajectory(self.params_, z0, times)

    def score(self, trajectories) -> float:
        """Negative mean L2 error over the given trajectories (higher is better)."""
        trajs = self._check_trajectories(trajectories)
        errs = [l2_error(self.predict(t.z[0], t.times), t) for t in trajs]
        return -float(np.mean(errs))
