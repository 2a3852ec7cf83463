"""Synthetic data for the two experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..hamiltonian import KeplerSingularityError, kepler_field
from ..integrator import PhaseState, Trajectory, sprk_step
from ..tableau import builtin_tableau

__all__ = ["ClassificationDataset", "KeplerDataset", "gen_classification", "gen_kepler"]


@dataclass
class ClassificationDataset:
    features: np.ndarray   # (n, 2)
    labels: np.ndarray     # (n,) in {0, 1}
    train_idx: np.ndarray
    test_idx: np.ndarray
    seed: int

    @property
    def train(self):
        return self.features[self.train_idx], self.labels[self.train_idx]

    @property
    def test(self):
        return self.features[self.test_idx], self.labels[self.test_idx]


def _rings(rng, count, radii, noise):
    inner = count // 2
    labels = np.r_[np.zeros(inner, dtype=int), np.ones(count - inner, dtype=int)]
    r = np.asarray(radii, dtype=float)[labels] + noise * rng.standard_normal(count)
    theta = rng.uniform(0.0, 2 * np.pi, count)
    X = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    perm = rng.permutation(count)
    return X[perm], labels[perm]


def gen_classification(seed: int = 0, n_train: int = 400, n_test: int = 200,
                       radii=(1.0, 2.0), noise: float = 0.1) -> ClassificationDataset:
    """Two concentric noisy rings; label 0 for the inner ring, 1 for the outer."""
    rng = np.random.default_rng(seed)
    Xtr, ytr = _rings(rng, n_train, radii, noise)
    Xte, yte = _rings(rng, n_test, radii, noise)
    X = np.vstack([Xtr, Xte])
    y = np.r_[ytr, yte]
    return ClassificationDataset(X, y, np.arange(n_train), np.arange(n_train, n_train + n_test), seed)


@dataclass
class KeplerDataset:
    trajectories: list[Trajectory]
    test: Trajectory
    seed: int

    @property
    def n_points(self) -> int:
        return sum(len(t) for t in self.trajectories)


def circular_orbit_state(radius: float = 1.0, angle: float = 0.0) -> PhaseState:
    """Initial state of the circular orbit for ``p' = -pi q / (4 |q|^{3/2})``."""
    speed = np.sqrt(np.pi * np.sqrt(radius) / 4.0)
    u = np.array([np.cos(angle), np.sin(angle)])
    return PhaseState(radius * u, speed * np.array([-u[1], u[0]]))


def _sample_initial(rng) -> np.ndarray:
    r = rng.uniform(0.8, 1.2)
    s = circular_orbit_state(r, rng.uniform(0.0, 2 * np.pi))
    return np.r_[s.q, s.p * (1.0 + rng.uniform(-0.1, 0.1))]


def _reference_states(z0: np.ndarray, dt: np.ndarray, n_intervals: int,
                      h_max: float) -> np.ndarray:
    """sprk4 samples ``(n_intervals + 1, rows, 4)``; row ``j`` is sampled every ``dt[j]``."""
    H = kepler_field()
    tab = builtin_tableau("sprk4")
    sub = int(np.ceil(dt.max() / h_max - 1e-9))
    h = (dt / sub)[:, None]
    state = PhaseState(z0[:, :2], z0[:, 2:])
    out = np.empty((n_intervals + 1,) + z0.shape)
    out[0] = z0
    for k in range(1, n_intervals + 1):
        for _ in range(sub):
            state = sprk_step(H, state, 0.0, h, tab)   # autonomous field
        out[k] = state.z
    return out


def reference_trajectories(z0: np.ndarray, n_points: int, t_final: float,
                           h_max: float = 1e-4) -> list[Trajectory]:
    """sprk4 runs at a step of at most ``h_max``, sampled on a uniform grid."""
    z0 = np.atleast_2d(np.asarray(z0, dtype=float))
    dt = t_final / (n_points - 1)
    out = _reference_states(z0, np.full(len(z0), dt), n_points - 1, h_max)
    times = dt * np.arange(n_points)
    return [Trajectory(times, out[:, j, :2], out[:, j, 2:]) for j in range(len(z0))]


def gen_kepler(seed: int = 0, n_traj: int = 27, n_points: int = 2000, t_final: float = 2.0,
               h_max: float = 1e-4) -> KeplerDataset:
    """``n_traj`` perturbed circular orbits with ``n_points`` samples in total.

    Per-trajectory counts differ by at most one (the remainder goes to the
    first trajectories) and every trajectory covers ``[0, t_final]`` with its
    own spacing. The test trajectory follows the first initial condition over
    ``[0, 2 t_final]`` at that trajectory's spacing.
    """
    rng = np.random.default_rng(seed)
    base, extra = divmod(n_points, n_traj)
    counts = np.array([base + (j < extra) for j in range(n_traj)])
    if counts.min() < 2:
        raise ValueError("need at least two samples per trajectory")
    dt = t_final / (counts - 1)
    z0 = np.array([_sample_initial(rng) for _ in range(n_traj)])
    while True:
        try:
            out = _reference_states(z0, dt, counts.max() - 1, h_max)
            # the first trajectory continues alone to twice the horizon
            tail = _reference_states(out[counts[0] - 1, :1], dt[:1], counts[0] - 1, h_max)
            break
        except KeplerSingularityError:
            # rare: find the offending orbits one by one and redraw them
            for j in range(n_traj):
                try:
                    _reference_states(z0[j:j + 1], dt[j:j + 1], 2 * (counts[j] - 1), h_max)
                except KeplerSingularityError:
                    z0[j] = _sample_initial(rng)
    trajs = [Trajectory(dt[j] * np.arange(counts[j]), out[:counts[j], j, :2], out[:counts[j], j, 2:])
             for j in range(n_traj)]
    z_test = np.concatenate([out[:counts[0], 0], tail[1:, 0]])
    test = Trajectory(dt[0] * np.arange(len(z_test)), z_test[:, :2], z_test[:, 2:])
    return KeplerDataset(trajs, test, seed)
