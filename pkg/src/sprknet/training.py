"""Losses, regulariser, optimisers and the mini-batch training loop."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.special import expit

from .integrator import Trajectory
from .network import NetParams, backward, forward, gradient_norm_audit

__all__ = [
    "ClassificationProblem",
    "EpochRecord",
    "LossSpec",
    "Metrics",
    "NonFiniteGradientError",
    "OptimizerState",
    "TrainingDivergedError",
    "loss_classification",
    "loss_trajectory",
    "optimizer_step",
    "regularizer",
    "train",
]

log = logging.getLogger(__name__)


class NonFiniteGradientError(FloatingPointError):
    pass


class TrainingDivergedError(RuntimeError):
    def __init__(self, msg, metrics=None):
        super().__init__(msg)
        self.metrics = metrics


@dataclass(frozen=True)
class LossSpec:
    kind: str = "binary_classification"
    regularizer_weight: float = 0.0

    def __post_init__(self):
        if self.kind not in ("binary_classification", "trajectory_l2"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if not (math.isfinite(self.regularizer_weight) and self.regularizer_weight >= 0):
            raise ValueError("regularizer weight must be finite and >= 0")


def loss_classification(output, label) -> tuple[float, np.ndarray]:
    """Sigmoid cross-entropy on a scalar logit, averaged over the batch.

    ``output`` is ``(1,)`` for one sample or ``(B, 1)`` for a batch.
    """
    z = np.asarray(output, dtype=float)
    if not np.all(np.isfinite(z)):
        raise FloatingPointError("non-finite network output")
    y = np.asarray(label, dtype=float).reshape(z.shape)
    count = z.shape[0] if z.ndim == 2 else 1
    loss = np.sum(np.logaddexp(0.0, z) - y * z) / count
    grad = (expit(z) - y) / count
    return float(loss), grad


def _as_z(x) -> np.ndarray:
    if isinstance(x, Trajectory):
        return x.z
    return np.asarray(x, dtype=float)


def loss_trajectory(predicted, observed) -> tuple[float, np.ndarray]:
    """Mean squared Euclidean deviation over grid points and its gradient."""
    if isinstance(predicted, Trajectory) and isinstance(observed, Trajectory):
        if predicted.times.shape != observed.times.shape or not np.allclose(predicted.times, observed.times):
            raise ValueError("trajectories live on different time grids")
    zp, zo = _as_z(predicted), _as_z(observed)
    if zp.shape != zo.shape:
        raise ValueError(f"grid mismatch: {zp.shape} vs {zo.shape}")
    diff = zp - zo
    n = zp.shape[0]
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


def regularizer(params: NetParams, lam: float) -> tuple[float, dict[str, np.ndarray]]:
    """``lam * sum ||u||^2`` over the layer parameters (output layer excluded)."""
    total = 0.0
    grads = {}
    for k, a in params.arrays().items():
        if k in ("W0", "b0"):
            grads[k] = np.zeros_like(a)
        else:
            total += float(np.sum(a * a))
            grads[k] = 2.0 * lam * a
    return lam * total, grads


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if not self.lr >= 0:
            raise ValueError("learning rate must be >= 0")


def optimizer_step(state: OptimizerState, params: NetParams, grads: dict[str, np.ndarray]) -> None:
    """Descend along ``grads`` in place and advance the optimiser state."""
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient in {k}")
    arrays = params.arrays()
    state.t += 1
    if state.kind == "sgd":
        for k, g in grads.items():
            arrays[k] -= state.lr * g
    else:
        bc1 = 1.0 - state.beta1 ** state.t
        bc2 = 1.0 - state.beta2 ** state.t
        for k, g in grads.items():
            if k not in state.m:
                state.m[k] = np.zeros_like(g)
                state.v[k] = np.zeros_like(g)
            if state.m[k].shape != g.shape:
                raise ValueError(f"optimizer state for {k} has shape {state.m[k].shape}, gradient {g.shape}")
            state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
            state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * (g * g)
            arrays[k] -= state.lr * (state.m[k] / bc1) / (np.sqrt(state.v[k] / bc2) + state.eps)
    params.version += 1


def add_grads(a: dict, b: dict) -> dict:
    return {k: a[k] + b[k] for k in a}


class Problem(Protocol):
    n_samples: int

    def loss_and_grad(self, params: NetParams, idx: np.ndarray) -> tuple[float, dict]: ...

    def full_loss(self, params: NetParams) -> float: ...

    def test_metric(self, params: NetParams) -> float: ...

    def audit_inputs(self) -> np.ndarray: ...


class ClassificationProblem:
    """Binary labels from a scalar logit ``W0 z_N + b0``."""

    def __init__(self, X, y, X_test=None, y_test=None, lam: float = 0.0):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.X_test = self.X if X_test is None else np.asarray(X_test, dtype=float)
        self.y_test = self.y if y_test is None else np.asarray(y_test, dtype=float)
        self.lam = lam
        self.n_samples = len(self.X)

    def loss_and_grad(self, params, idx):
        out, tape = forward(params, self.X[idx])
        loss, gout = loss_classification(out, self.y[idx])
        grads, _ = backward(params, tape, gout)
        if self.lam:
            r, rg = regularizer(params, self.lam)
            loss, grads = loss + r, add_grads(grads, rg)
        return loss, grads

    def full_loss(self, params):
        out, _ = forward(params, self.X)
        loss, _ = loss_classification(out, self.y)
        return loss + (regularizer(params, self.lam)[0] if self.lam else 0.0)

    def test_metric(self, params):
        out, _ = forward(params, self.X_test)
        return 100.0 * float(np.mean((out[:, 0] > 0) == (self.y_test > 0.5)))

    def audit_inputs(self):
        return self.X[:4]


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    test_metric: float
    min_layer_norm: float
    max_layer_norm: float
    seconds: float
    aborted: bool = False


@dataclass
class Metrics:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def final(self) -> EpochRecord:
        return self.records[-1]

    @property
    def min_layer_norm(self) -> float:
        return min(r.min_layer_norm for r in self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path, include_time: bool = False) -> None:
        """Write ``epoch,loss,test_metric,min_layer_norm,seconds``.

        Wall time is left blank unless ``include_time`` so that repeated runs
        produce identical files.
        """
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss", "test_metric", "min_layer_norm", "seconds"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.loss), repr(r.test_metric), repr(r.min_layer_norm),
                            repr(r.seconds) if include_time else ""])


def _audit(params: NetParams, inputs) -> tuple[float, float]:
    lo, hi = math.inf, 0.0
    for x in inputs:
        norms = gradient_norm_audit(params, x).layer_norms
        lo, hi = min(lo, float(norms.min())), max(hi, float(norms.max()))
    return lo, hi


def make_problem(data, loss: LossSpec):
    if hasattr(data, "loss_and_grad"):
        return data
    if loss.kind == "binary_classification":
        X, y, *rest = data
        X_test, y_test = rest if rest else (None, None)
        return ClassificationProblem(X, y, X_test, y_test, lam=loss.regularizer_weight)
    from .composed import TrajectoryProblem

    train_trajs, test_traj = data
    return TrajectoryProblem(train_trajs, test_traj, lam=loss.regularizer_weight)


def train(net: NetParams, data, loss: LossSpec, opt: OptimizerState, epochs: int,
          batch_size: int, seed: int, *, divergence_factor: float = 1e6) -> tuple[NetParams, Metrics]:
    """Shuffled mini-batch descent; ``net`` is updated in place and returned.

    ``data`` is either a problem object or, for classification,
    ``(X, y[, X_test, y_test])``; for trajectories ``(train_trajs, test_traj)``.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    problem = make_problem(data, loss)
    rng = np.random.default_rng(seed)
    metrics = Metrics()
    initial = problem.full_loss(net)
    t0 = time.perf_counter()
    for epoch in range(1, epochs + 1):
        order = rng.permutation(problem.n_samples)
        aborted = False
        for start in range(0, problem.n_samples, batch_size):
            idx = np.sort(order[start:start + batch_size])
            try:
                batch_loss, grads = problem.loss_and_grad(net, idx)
                if not math.isfinite(batch_loss):
                    raise NonFiniteGradientError("non-finite batch loss")
                optimizer_step(opt, net, grads)
            except FloatingPointError as exc:
                log.warning("epoch %d aborted: %s (h=%g, lr=%g)", epoch, exc, net.h, opt.lr)
                aborted = True
                break
        epoch_loss = problem.full_loss(net)
        lo, hi = _audit(net, problem.audit_inputs())
        metrics.records.append(EpochRecord(epoch, epoch_loss, problem.test_metric(net), lo, hi,
                                           time.perf_counter() - t0, aborted))
        if not math.isfinite(epoch_loss) or epoch_loss > divergence_factor * max(initial, 1e-300):
            raise TrainingDivergedError(
                f"loss {epoch_loss:.3g} exceeded {divergence_factor:g} x initial {initial:.3g}", metrics)
    return net, metrics
