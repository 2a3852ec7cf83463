"""Separable, possibly time-dependent Hamiltonian systems.

A system is described by its two vector fields ``f(p, t) = dH/dp`` and
``g(q, t) = -dH/dq``. Field Jacobians are carried alongside so step
Jacobians can be assembled analytically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

__all__ = [
    "ACTIVATIONS",
    "Activation",
    "KeplerSingularityError",
    "NetworkFieldParams",
    "SeparableHamiltonian",
    "drift_field",
    "harmonic_oscillator",
    "kepler_field",
    "kick_field",
    "network_field",
    "test_field_nonautonomous",
]

Field = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class SeparableHamiltonian:
    dim: int
    f: Field
    g: Field
    energy: Optional[Callable[[np.ndarray, np.ndarray, float], float]] = None
    df: Optional[Field] = None  # d f / d p, shape (n, n)
    dg: Optional[Field] = None  # d g / d q, shape (n, n)
    name: str = "custom"


@dataclass(frozen=True)
class Activation:
    name: str
    value: Callable[[np.ndarray], np.ndarray]
    # derivative expressed through the activation output to reuse forward values
    deriv_from_value: Callable[[np.ndarray], np.ndarray]
    antiderivative: Callable[[np.ndarray], np.ndarray]

    def deriv(self, x):
        return self.deriv_from_value(self.value(x))


def _log_cosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - np.log(2.0)


ACTIVATIONS = {
    "tanh": Activation("tanh", np.tanh, lambda y: 1.0 - y * y, _log_cosh),
    "sigmoid": Activation("sigmoid", expit, lambda y: y * (1.0 - y),
                          lambda x: np.logaddexp(0.0, x)),
}


def get_activation(name: str) -> Activation:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose one of {sorted(ACTIVATIONS)}") from None


# The two kernels below are shared by the field objects and by the network
# forward pass so both paths evaluate identical floating-point expressions.
# Inputs may be single vectors (n,) or batches (B, n).

def drift_field(p, W, beta, eta, act: Activation):
    """``W^T act(W p + beta) + eta``."""
    return act.value(p @ W.T + beta) @ W + eta


def kick_field(q, W, beta, eta, act: Activation):
    """``-W^T act(W q + beta) + eta``."""
    return eta - act.value(q @ W.T + beta) @ W


@dataclass(frozen=True)
class NetworkFieldParams:
    W1: np.ndarray
    W2: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    activation: str = "tanh"

    def __post_init__(self):
        n = np.shape(self.W1)[0]
        for name in ("W1", "W2"):
            if np.shape(getattr(self, name)) != (n, n):
                raise ValueError(f"{name} must be {n}x{n}, got {np.shape(getattr(self, name))}")
        for name in ("beta1", "beta2", "eta1", "eta2"):
            if np.shape(getattr(self, name)) != (n,):
                raise ValueError(f"{name} must have shape ({n},), got {np.shape(getattr(self, name))}")
        get_activation(self.activation)

    @property
    def n(self) -> int:
        return self.W1.shape[0]


def network_field(params: NetworkFieldParams) -> SeparableHamiltonian:
    """The separable system generated by one set of network parameters.

    ``q' = W2^T act(W2 p + beta2) + eta2`` and
    ``p' = -W1^T act(W1 q + beta1) + eta1``.
    """
    act = get_activation(params.activation)
    W1, W2, b1, b2, e1, e2 = (np.asarray(x, dtype=float) for x in (
        params.W1, params.W2, params.beta1, params.beta2, params.eta1, params.eta2))

    def f(p, t=0.0):
        return drift_field(p, W2, b2, e2, act)

    def g(q, t=0.0):
        return kick_field(q, W1, b1, e1, act)

    def df(p, t=0.0):
        d = act.deriv(W2 @ p + b2)
        return W2.T @ (d[:, None] * W2)

    def dg(q, t=0.0):
        d = act.deriv(W1 @ q + b1)
        return -(W1.T @ (d[:, None] * W1))

    def energy(q, p, t=0.0):
        return float(np.sum(act.antiderivative(W1 @ q + b1))
                     + np.sum(act.antiderivative(W2 @ p + b2))
                     - e1 @ q + e2 @ p)

    return SeparableHamiltonian(params.n, f, g, energy, df, dg, name="network")


class KeplerSingularityError(FloatingPointError):
    """Raised when the Kepler force is evaluated at (or next to) the origin."""


KEPLER_EPS = 1e-8
_K = np.pi / 4.0


def _kepler_radius(q):
    r = np.linalg.norm(q, axis=-1)
    if np.any(r < KEPLER_EPS):
        raise KeplerSingularityError(f"Kepler force evaluated at |q| = {np.min(r):.3g} < {KEPLER_EPS}")
    return r


def kepler_field() -> SeparableHamiltonian:
    """Planar central force ``p' = -pi / (4 |q|^{3/2}) q`` with ``q' = p``."""

    def f(p, t=0.0):
        return p

    def g(q, t=0.0):
        r = _kepler_radius(q)
        return -_K * q / (r ** 1.5)[..., None]

    def df(p, t=0.0):
        return np.eye(2)

    def dg(q, t=0.0):
        r = float(_kepler_radius(q))
        return -_K * (np.eye(2) * r ** -1.5 - 1.5 * np.outer(q, q) * r ** -3.5)

    def energy(q, p, t=0.0):
        r = float(_kepler_radius(q))
        return 0.5 * float(p @ p) + 0.5 * np.pi * np.sqrt(r)

    return SeparableHamiltonian(2, f, g, energy, df, dg, name="kepler")


def harmonic_oscillator(n: int = 1, omega: float = 1.0) -> SeparableHamiltonian:
    w2 = omega * omega
    return SeparableHamiltonian(
        n,
        f=lambda p, t=0.0: p,
        g=lambda q, t=0.0: -w2 * q,
        energy=lambda q, p, t=0.0: 0.5 * float(p @ p) + 0.5 * w2 * float(q @ q),
        df=lambda p, t=0.0: np.eye(n),
        dg=lambda q, t=0.0: -w2 * np.eye(n),
        name="harmonic",
    )


def test_field_nonautonomous() -> SeparableHamiltonian:
    """``H = (1 + sin t) p^2 / 2 + (1 + cos(t) / 2) q^2 / 2`` in one degree of freedom."""
    kin = lambda t: 1.0 + np.sin(t)
    pot = lambda t: 1.0 + 0.5 * np.cos(t)
    return SeparableHamiltonian(
        1,
        f=lambda p, t=0.0: kin(t) * p,
        g=lambda q, t=0.0: -pot(t) * q,
        energy=lambda q, p, t=0.0: float(0.5 * kin(t) * (p @ p) + 0.5 * pot(t) * (q @ q)),
        df=lambda p, t=0.0: kin(t) * np.eye(1),
        dg=lambda q, t=0.0: -pot(t) * np.eye(1),
        name="nonautonomous",
    )


# keep pytest from collecting the factory when imported into a test module
test_field_nonautonomous.__test__ = False
