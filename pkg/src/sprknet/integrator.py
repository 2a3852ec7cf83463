"""Explicit symplectic PRK time stepping and its analytic step Jacobians."""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .hamiltonian import SeparableHamiltonian
from .tableau import PrkTableau, builtin_tableau

__all__ = [
    "IntegrationError",
    "OrderSaturationError",
    "PhaseState",
    "Trajectory",
    "endpoint_errors",
    "estimate_order",
    "integrate",
    "spectral_norm",
    "sprk_step",
    "step_jacobian",
    "symplectic_matrix",
    "symplectic_residual",
]


@dataclass(frozen=True)
class PhaseState:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if q.shape != p.shape:
            raise ValueError(f"q and p shapes differ: {q.shape} vs {p.shape}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.q, self.p], axis=-1)


@dataclass
class Trajectory:
    """States on a time grid; ``q`` and ``p`` are ``(len(times), n)`` arrays."""

    times: np.ndarray
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if not (len(self.times) == len(self.q) == len(self.p)):
            raise ValueError("times, q and p must have the same length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    @property
    def states(self) -> list[PhaseState]:
        return [PhaseState(q, p) for q, p in zip(self.q, self.p)]

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.q, self.p], axis=1)

    def to_csv(self, path) -> None:
        n = self.q.shape[1]
        header = ",".join(["t"] + [f"q{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)])
        data = np.column_stack([self.times, self.q, self.p])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        n = (data.shape[1] - 1) // 2
        if data.shape[1] != 2 * n + 1:
            raise ValueError("trajectory CSV must have columns t,q1..qn,p1..pn")
        return cls(data[:, 0], data[:, 1:1 + n], data[:, 1 + n:])


class IntegrationError(RuntimeError):
    def __init__(self, step: int, cause: BaseException):
        super().__init__(f"integration failed at step {step}: {cause}")
        self.step = step


class OrderSaturationError(ValueError):
    pass


def _check_executable(tab: PrkTableau) -> None:
    if tab.executable:
        return
    if not tab.is_explicit:
        raise ValueError(f"tableau {tab.name!r} is not in explicit lower-triangular form")
    raise ValueError(f"tableau {tab.name!r} violates the symplecticity condition")


def sprk_step(H: SeparableHamiltonian, state: PhaseState, t: float, h: float,
              tab: PrkTableau) -> PhaseState:
    """One explicit SPRK step.

    Stage ``i`` advances ``q`` by ``h b_i f(p, t + c_i h)`` and then ``p`` by
    ``h B_i g(q, t + C_i h)`` using the freshly updated ``q``. Zero-weight
    sub-steps are skipped. ``state`` may hold batches of shape ``(B, n)`` when
    the fields are vectorised; ``h`` may then be a ``(B, 1)`` column of
    per-row steps.
    """
    _check_executable(tab)
    if np.any(np.asarray(h) < 0):
        raise ValueError("step size must be non-negative")
    b, B = tab.weights
    c, C = tab.nodes
    q, p = state.q, state.p
    for i in range(tab.s):
        if b[i] != 0.0:
            q = q + (h * b[i]) * H.f(p, t + c[i] * h)
        if B[i] != 0.0:
            p = p + (h * B[i]) * H.g(q, t + C[i] * h)
    return PhaseState(q, p)


def integrate(H: SeparableHamiltonian, state0: PhaseState, t0: float, h: float,
              n_steps: int, tab: PrkTableau) -> Trajectory:
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    qs, ps = [state0.q], [state0.p]
    state = state0
    for k in range(n_steps):
        try:
            state = sprk_step(H, state, t0 + k * h, h, tab)
        except (ArithmeticError, ValueError) as exc:
            raise IntegrationError(k, exc) from exc
        qs.append(state.q)
        ps.append(state.p)
    times = t0 + h * np.arange(n_steps + 1)
    if n_steps == 0:
        times = np.array([float(t0)])
    return Trajectory(times, np.array(qs), np.array(ps))


def step_jacobian(H: SeparableHamiltonian, state: PhaseState, t: float, h: float,
                  tab: PrkTableau) -> np.ndarray:
    """Derivative of :func:`sprk_step` with respect to ``(q, p)``, chained per sub-step."""
    _check_executable(tab)
    if H.df is None or H.dg is None:
        raise ValueError("Hamiltonian does not provide field Jacobians")
    n = H.dim
    b, B = tab.weights
    c, C = tab.nodes
    q, p = state.q, state.p
    D = np.eye(2 * n)
    for i in range(tab.s):
        if b[i] != 0.0:
            tau = t + c[i] * h
            F = H.df(p, tau)
            # rows of q pick up hb F times the current p-rows
            D[:n] = D[:n] + (h * b[i]) * (F @ D[n:])
            q = q + (h * b[i]) * H.f(p, tau)
        if B[i] != 0.0:
            tau = t + C[i] * h
            G = H.dg(q, tau)
            D[n:] = D[n:] + (h * B[i]) * (G @ D[:n])
            p = p + (h * B[i]) * H.g(q, tau)
    return D


@functools.lru_cache(maxsize=16)
def _J(n: int) -> np.ndarray:
    I = np.eye(n)
    Z = np.zeros((n, n))
    J = np.block([[Z, I], [-I, Z]])
    J.setflags(write=False)
    return J


def symplectic_matrix(n: int) -> np.ndarray:
    """The canonical ``2n x 2n`` matrix ``[[0, I], [-I, 0]]``."""
    return _J(n).copy()


def symplectic_residual(D: np.ndarray) -> float:
    """Max-abs entry of ``D^T J D - J``."""
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1] or D.shape[0] % 2:
        raise ValueError(f"expected a square matrix of even size, got shape {D.shape}")
    J = _J(D.shape[0] // 2)
    return float(np.max(np.abs(D.T @ J @ D - J)))


def spectral_norm(D: np.ndarray) -> float:
    return float(np.linalg.norm(D, 2))


def endpoint_errors(H: SeparableHamiltonian, state0: PhaseState, t0: float, T: float,
                    tab: PrkTableau, step_set: Sequence[float]) -> np.ndarray:
    """Endpoint errors against an sprk4 reference run at ``min(step_set) / 64``."""
    steps = np.asarray(step_set, dtype=float)

    def n_for(h):
        n = int(round(T / h))
        if n < 1 or abs(n * h - T) > 1e-9 * max(T, 1.0):
            raise ValueError(f"step {h} does not divide the interval length {T}")
        return n

    h_ref = steps.min() / 64
    ref_tab = builtin_tableau("sprk4")
    ref = state0
    for k in range(n_for(h_ref)):
        ref = sprk_step(H, ref, t0 + k * h_ref, h_ref, ref_tab)
    errors = []
    for h in steps:
        z = state0
        for k in range(n_for(h)):
            z = sprk_step(H, z, t0 + k * h, h, tab)
        errors.append(np.linalg.norm(z.z - ref.z))
    return np.array(errors)


def estimate_order(H: SeparableHamiltonian, state0: PhaseState, t0: float, T: float,
                   tab: PrkTableau, step_set: Sequence[float] = (0.1, 0.05, 0.025, 0.0125)) -> float:
    """Least-squares slope of log(endpoint error) against log(h)."""
    errors = endpoint_errors(H, state0, t0, T, tab, step_set)
    steps = np.asarray(step_set, dtype=float)
    if errors[np.argmax(steps)] < 1e-13:
        raise OrderSaturationError("error below 1e-13 at the largest step; shrink T or grow h")
    if np.any(errors <= 0):
        raise OrderSaturationError("zero endpoint error; the reference cannot resolve this method")
    slope, _ = np.polyfit(np.log(steps), np.log(errors), 1)
    return float(slope)
