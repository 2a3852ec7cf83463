"""Learning an unknown force inside an SPRK integrator.

The known half of the dynamics is ``q' = p``; the unknown force
``p' = F(q)`` is an SPRK network with two outputs. Trajectories are rolled
out with the network's own tableau, and gradients chain the integrator
sub-step Jacobians with the network layer Jacobians in reverse.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import _kernels
from .integrator import Trajectory
from .network import NetParams, backward, forward
from .training import add_grads, regularizer

__all__ = ["TrajectoryProblem", "rollout", "rollout_backward", "predict_trajectory", "l2_error"]


def _dt_column(dt, batch):
    dt = np.asarray(dt, dtype=float)
    return dt if dt.ndim == 0 else dt.reshape(batch, 1)


def rollout(params: NetParams, z0: np.ndarray, n_steps: int, dt):
    """Integrate ``q' = p, p' = net(q)`` for a batch ``z0`` of shape ``(B, 4)``.

    ``dt`` is a scalar or one step per batch row. Returns the states
    ``(n_steps + 1, B, 4)`` and the per-step network tapes.
    """
    z0 = np.atleast_2d(np.asarray(z0, dtype=float))
    dt = _dt_column(dt, len(z0))
    n = z0.shape[1] // 2
    b, B = params.tableau.weights
    q, p = z0[:, :n], z0[:, n:]
    states = np.empty((n_steps + 1,) + z0.shape)
    states[0] = z0
    tapes = []
    for k in range(n_steps):
        step = []
        for i in range(params.tableau.s):
            if b[i] != 0.0:
                q = q + (dt * b[i]) * p
            if B[i] != 0.0:
                out, tape = forward(params, q)
                p = p + (dt * B[i]) * out
                step.append((i, tape))
        tapes.append(step)
        states[k + 1, :, :n] = q
        states[k + 1, :, n:] = p
    if not np.all(np.isfinite(states)):
        raise FloatingPointError(f"rollout blew up (dt={np.max(dt):g}); reduce the step or the learning rate")
    return states, tapes


def rollout_backward(params: NetParams, tapes, dstates: np.ndarray, dt) -> dict:
    """Parameter gradient given ``dL/dz_k`` for every rolled-out state."""
    dt = _dt_column(dt, dstates.shape[1])
    b, B = params.tableau.weights
    n = dstates.shape[2] // 2
    grads = {k: np.zeros_like(v) for k, v in params.arrays().items()}
    qbar = np.zeros(dstates.shape[1:2] + (n,))
    pbar = np.zeros_like(qbar)
    for k in reversed(range(len(tapes))):
        qbar = qbar + dstates[k + 1, :, :n]
        pbar = pbar + dstates[k + 1, :, n:]
        step = dict(tapes[k])
        for i in reversed(range(params.tableau.s)):
            if i in step:
                g, gx = backward(params, step[i], (dt * B[i]) * pbar)
                grads = add_grads(grads, g)
                qbar = qbar + gx
            if b[i] != 0.0:
                pbar = pbar + (dt * b[i]) * qbar
    return grads


def _kernel_args(params: NetParams):
    b, B = params.tableau.weights
    kind = {"tanh": _kernels.TANH, "sigmoid": _kernels.SIGMOID}[params.activation]
    return b, B, params.share_stages, kind


def rollout_compiled(params: NetParams, z0, n_steps: int, dt):
    """Same map as :func:`rollout`, evaluated by the compiled kernel."""
    z0 = np.ascontiguousarray(np.atleast_2d(z0), dtype=float)
    dt = np.broadcast_to(np.asarray(dt, dtype=float), (len(z0),)).copy()
    b, B, shared, kind = _kernel_args(params)
    states, tape = _kernels.rollout_forward(
        z0, dt, n_steps, params.W1, params.W2, params.beta1, params.beta2, params.eta1,
        params.eta2, params.W0, params.b0, float(params.h), b, B, shared, kind)
    if not np.all(np.isfinite(states)):
        raise FloatingPointError(f"rollout blew up (dt={np.max(dt):g}); reduce the step or the learning rate")
    return states, (tape, dt)


def rollout_backward_compiled(params: NetParams, tape, dstates: np.ndarray) -> dict:
    tape, dt = tape
    b, B, shared, kind = _kernel_args(params)
    grads = {k: np.zeros_like(v) for k, v in params.arrays().items()}
    _kernels.rollout_backward(
        np.ascontiguousarray(dstates, dtype=float), dt, params.W1, params.W2, params.W0,
        float(params.h), b, B, shared, kind, tape, grads["W1"], grads["W2"], grads["beta1"],
        grads["beta2"], grads["eta1"], grads["eta2"], grads["W0"], grads["b0"])
    return grads


def predict_trajectory(params: NetParams, z0, times) -> Trajectory:
    times = np.asarray(times, dtype=float)
    dt = _uniform_step(times)
    states, _ = rollout(params, np.asarray(z0, dtype=float)[None, :], len(times) - 1, dt)
    n = states.shape[2] // 2
    return Trajectory(times, states[:, 0, :n], states[:, 0, n:])


def l2_error(predicted: Trajectory, observed: Trajectory) -> float:
    """Discrete L2 norm ``sqrt(sum_i |x_pred(t_i) - x_i|^2)`` of the deviation."""
    d = predicted.z - observed.z
    return float(np.sqrt(np.sum(d * d)))


def _uniform_step(times: np.ndarray) -> float:
    if len(times) < 2:
        return 1.0
    steps = np.diff(times)
    dt = float(steps.mean())
    if np.max(np.abs(steps - dt)) > 1e-9 * max(1.0, abs(dt)):
        raise ValueError("trajectory grid is not uniform")
    return dt


class TrajectoryProblem:
    """Rollout loss over uniformly sampled trajectories.

    Each trajectory keeps its own step size and length; shorter ones are
    masked. Each sample is one trajectory and its loss is the mean squared
    deviation over its own points.
    """

    def __init__(self, trajectories: Sequence[Trajectory], test: Trajectory | None = None,
                 lam: float = 0.0, compiled: bool = True):
        if not trajectories:
            raise ValueError("need at least one trajectory")
        self.dt = np.array([_uniform_step(t.times) for t in trajectories])
        self.lengths = np.array([len(t) for t in trajectories])
        L = self.lengths.max()
        dim = trajectories[0].z.shape[1]
        self.Z = np.zeros((len(trajectories), L, dim))
        self.mask = np.zeros((len(trajectories), L))
        for j, t in enumerate(trajectories):
            self.Z[j, :len(t)] = t.z
            self.mask[j, :len(t)] = 1.0
        self.test = test if test is not None else trajectories[0]
        self.lam = lam
        self.n_samples = len(trajectories)
        self.compiled = compiled

    def _loss(self, params, idx, with_grad):
        idx = np.asarray(idx)
        L = int(self.lengths[idx].max())
        obs = self.Z[idx, :L].transpose(1, 0, 2)          # (L, B, dim)
        mask = self.mask[idx, :L].T[:, :, None]
        run = rollout_compiled if self.compiled else rollout
        states, tapes = run(params, obs[0], L - 1, self.dt[idx])
        diff = (states - obs) * mask
        weight = 1.0 / (self.lengths[idx] * len(idx))    # per-trajectory mean, then batch mean
        loss = float(np.sum(np.sum(diff * diff, axis=(0, 2)) * weight))
        if self.lam:
            loss += regularizer(params, self.lam)[0]
        if not with_grad:
            return loss, None
        dstates = 2.0 * diff * weight[None, :, None]
        if self.compiled:
            grads = rollout_backward_compiled(params, tapes, dstates)
        else:
            grads = rollout_backward(params, tapes, dstates, self.dt[idx])
        if self.lam:
            grads = add_grads(grads, regularizer(params, self.lam)[1])
        return loss, grads

    def loss_and_grad(self, params, idx):
        return self._loss(params, idx, True)

    def full_loss(self, params):
        return self._loss(params, np.arange(self.n_samples), False)[0]

    def test_metric(self, params):
        if self.compiled:
            states, _ = rollout_compiled(params, self.test.z[0], len(self.test) - 1,
                                         _uniform_step(self.test.times))
            d = states[:, 0] - self.test.z
            return float(np.sqrt(np.sum(d * d)))
        pred = predict_trajectory(params, self.test.z[0], self.test.times)
        return l2_error(pred, self.test)

    def audit_inputs(self):
        n = self.Z.shape[2] // 2
        return self.Z[:4, 0, :n]
