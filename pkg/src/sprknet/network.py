"""SPRK networks: each layer is one explicit SPRK step of the network field.

Parameters are stored stage-stacked: ``W1[k, j]`` is the ``n x n`` matrix of
layer ``k`` and stage slot ``j``. With ``share_stages`` there is a single
slot per layer that every stage reads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .hamiltonian import NetworkFieldParams, get_activation
from .integrator import PhaseState, _check_executable, spectral_norm
from .tableau import BUILTIN_NAMES, PrkTableau, builtin_tableau

__all__ = [
    "ForwardTape",
    "GradientAudit",
    "LayerParams",
    "NetParams",
    "StaleTapeError",
    "augment",
    "backward",
    "forward",
    "gradient_norm_audit",
    "init_params",
    "layer_jacobians",
    "load_model",
    "save_model",
    "uap_closed_form",
]

LAYER_KEYS = ("W1", "W2", "beta1", "beta2", "eta1", "eta2")
OUTPUT_KEYS = ("W0", "b0")


class StaleTapeError(ValueError):
    pass


@dataclass
class LayerParams:
    """Per-stage parameters of one layer (views into the stacked arrays)."""

    W1: np.ndarray
    W2: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    share_stages: bool

    def stage(self, i: int, activation: str = "tanh") -> NetworkFieldParams:
        j = 0 if self.share_stages else i
        return NetworkFieldParams(self.W1[j], self.W2[j], self.beta1[j], self.beta2[j],
                                  self.eta1[j], self.eta2[j], activation)


@dataclass
class NetParams:
    W1: np.ndarray      # (N, S, n, n)
    W2: np.ndarray      # (N, S, n, n)
    beta1: np.ndarray   # (N, S, n)
    beta2: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    W0: np.ndarray      # (m, 2n)
    b0: np.ndarray      # (m,)
    h: float
    tableau: PrkTableau
    activation: str = "tanh"
    share_stages: bool = False
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        for key in LAYER_KEYS + OUTPUT_KEYS:
            setattr(self, key, np.asarray(getattr(self, key), dtype=float))
        if self.W1.ndim != 4:
            raise ValueError("W1 must have shape (layers, stage slots, n, n)")
        N, S, n, _ = self.W1.shape
        slots = 1 if self.share_stages else self.tableau.s
        if S != slots:
            raise ValueError(f"expected {slots} stage slot(s), got {S}")
        expect = {"W1": (N, S, n, n), "W2": (N, S, n, n)}
        expect.update({k: (N, S, n) for k in ("beta1", "beta2", "eta1", "eta2")})
        for key, shape in expect.items():
            if getattr(self, key).shape != shape:
                raise ValueError(f"{key} has shape {getattr(self, key).shape}, expected {shape}")
        if self.W0.ndim != 2 or self.W0.shape[1] != 2 * n:
            raise ValueError(f"W0 must have shape (m, {2 * n})")
        if self.b0.shape != (self.W0.shape[0],):
            raise ValueError(f"b0 must have shape ({self.W0.shape[0]},)")
        if not self.h > 0:
            raise ValueError("step size h must be positive")
        get_activation(self.activation)
        _check_executable(self.tableau)

    @property
    def N(self) -> int:
        return self.W1.shape[0]

    @property
    def n(self) -> int:
        return self.W1.shape[2]

    @property
    def m(self) -> int:
        return self.W0.shape[0]

    def arrays(self, output: bool = True) -> dict[str, np.ndarray]:
        keys = LAYER_KEYS + (OUTPUT_KEYS if output else ())
        return {k: getattr(self, k) for k in keys}

    def layer(self, k: int) -> LayerParams:
        return LayerParams(*(getattr(self, key)[k] for key in LAYER_KEYS), self.share_stages)

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays().values())

    def copy(self) -> "NetParams":
        return NetParams(**{k: v.copy() for k, v in self.arrays().items()}, h=self.h,
                         tableau=self.tableau, activation=self.activation,
                         share_stages=self.share_stages, version=self.version)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays().values()])

    def set_flat(self, v: np.ndarray) -> None:
        i = 0
        for a in self.arrays().values():
            a.ravel()[:] = v[i:i + a.size]  # arrays are contiguous so ravel is a view
            i += a.size
        self.version += 1


def init_params(n: int, N: int, tableau: PrkTableau | str, m: int | None = None, *,
                h: float = 0.1, activation: str = "tanh", share_stages: bool = False,
                rng: np.random.Generator | int | None = None,
                identity_output: bool = False) -> NetParams:
    """Uniform weights with half-width ``sqrt(6 / (fan_in + fan_out))``; biases and eta zero."""
    if isinstance(tableau, str):
        tableau = builtin_tableau(tableau)
    rng = np.random.default_rng(rng)
    m = n if m is None else m
    S = 1 if share_stages else tableau.s
    lim = np.sqrt(6.0 / (2 * n))
    W1 = rng.uniform(-lim, lim, (N, S, n, n))
    W2 = rng.uniform(-lim, lim, (N, S, n, n))
    zeros = lambda: np.zeros((N, S, n))
    if identity_output:
        W0 = np.hstack([np.eye(n), np.zeros((n, n))])[:m]
    else:
        lim0 = np.sqrt(6.0 / (2 * n + m))
        W0 = rng.uniform(-lim0, lim0, (m, 2 * n))
    return NetParams(W1, W2, zeros(), zeros(), zeros(), zeros(), W0, np.zeros(m), h=h,
                     tableau=tableau, activation=activation, share_stages=share_stages)


def augment(x) -> PhaseState:
    """Embed features as the phase point ``(q, p) = (0, x)``."""
    x = np.asarray(x, dtype=float)
    return PhaseState(np.zeros_like(x), x.copy())


@dataclass
class ForwardTape:
    # stages[k][i] = (P_in, act_q, Q_in, act_p); entries are None for skipped sub-steps
    stages: list
    zN: np.ndarray
    input_shape: tuple
    version: int
    signature: tuple


def _signature(params: NetParams) -> tuple:
    return (params.N, params.n, params.m, params.tableau.name, params.share_stages)


def forward(params: NetParams, x) -> tuple[np.ndarray, ForwardTape]:
    """Run the layered SPRK map on ``x`` of shape ``(n,)`` or ``(B, n)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.n:
        raise ValueError(f"input has {x.shape[-1]} features, network expects {params.n}")
    act = get_activation(params.activation)
    tab = params.tableau
    b, B = tab.weights
    h = params.h
    shared = params.share_stages
    state = augment(x)
    Q, P = state.q, state.p
    tape_stages = []
    for k in range(params.N):
        W1, W2 = params.W1[k], params.W2[k]
        be1, be2, e1, e2 = params.beta1[k], params.beta2[k], params.eta1[k], params.eta2[k]
        rec = []
        for i in range(tab.s):
            j = 0 if shared else i
            P_in = yq = Q_in = yp = None
            if b[i] != 0.0:
                P_in = P
                yq = act.value(P @ W2[j].T + be2[j])
                Q = Q + (h * b[i]) * (yq @ W2[j] + e2[j])
            if B[i] != 0.0:
                Q_in = Q
                yp = act.value(Q @ W1[j].T + be1[j])
                P = P + (h * B[i]) * (e1[j] - yp @ W1[j])
            rec.append((P_in, yq, Q_in, yp))
        tape_stages.append(rec)
    zN = np.concatenate([Q, P], axis=-1)
    out = zN @ params.W0.T + params.b0
    return out, ForwardTape(tape_stages, zN, x.shape, params.version, _signature(params))


def _2d(a):
    return a if a.ndim == 2 else a[None, :]


def backward(params: NetParams, tape: ForwardTape, grad_output) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Reverse accumulation through the cached stages.

    Returns the parameter gradients (summed over the batch) and the gradient
    with respect to the input features.
    """
    if tape.version != params.version or tape.signature != _signature(params):
        raise StaleTapeError("tape was recorded for different parameters")
    gy = _2d(np.asarray(grad_output, dtype=float))
    zN = _2d(tape.zN)
    if gy.shape != (zN.shape[0], params.m):
        raise ValueError(f"grad_output has shape {np.shape(grad_output)}, expected (..., {params.m})")
    act = get_activation(params.activation)
    tab = params.tableau
    b, B = tab.weights
    h, n = params.h, params.n
    shared = params.share_stages
    grads = {k: np.zeros_like(v) for k, v in params.arrays().items()}
    grads["W0"] = gy.T @ zN
    grads["b0"] = gy.sum(axis=0)
    zbar = gy @ params.W0
    qbar, pbar = zbar[:, :n], zbar[:, n:]
    for k in reversed(range(params.N)):
        W1, W2 = params.W1[k], params.W2[k]
        for i in reversed(range(tab.s)):
            j = 0 if shared else i
            P_in, yq, Q_in, yp = tape.stages[k][i]
            if yp is not None:
                Q_in, yp = _2d(Q_in), _2d(yp)
                v = (h * B[i]) * pbar
                delta = -(v @ W1[j].T) * act.deriv_from_value(yp)
                grads["eta1"][k, j] += v.sum(axis=0)
                grads["W1"][k, j] += delta.T @ Q_in - yp.T @ v
                grads["beta1"][k, j] += delta.sum(axis=0)
                qbar = qbar + delta @ W1[j]
            if yq is not None:
                P_in, yq = _2d(P_in), _2d(yq)
                v = (h * b[i]) * qbar
                delta = (v @ W2[j].T) * act.deriv_from_value(yq)
                grads["eta2"][k, j] += v.sum(axis=0)
                grads["W2"][k, j] += yq.T @ v + delta.T @ P_in
                grads["beta2"][k, j] += delta.sum(axis=0)
                pbar = pbar + delta @ W2[j]
    input_grad = pbar.reshape(tape.input_shape)
    return grads, input_grad


def layer_jacobians(params: NetParams, x) -> list[np.ndarray]:
    """State Jacobian ``d z_{k+1} / d z_k`` of every layer along the forward pass of ``x``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("layer Jacobians are computed for a single input vector")
    _, tape = forward(params, x)
    act = get_activation(params.activation)
    b, B = params.tableau.weights
    h, n = params.h, params.n
    out = []
    for k in range(params.N):
        D = np.eye(2 * n)
        for i in range(params.tableau.s):
            j = 0 if params.share_stages else i
            _, yq, _, yp = tape.stages[k][i]
            if yq is not None:
                W = params.W2[k, j]
                F = W.T @ (act.deriv_from_value(yq)[:, None] * W)
                D[:n] = D[:n] + (h * b[i]) * (F @ D[n:])
            if yp is not None:
                W = params.W1[k, j]
                G = -(W.T @ (act.deriv_from_value(yp)[:, None] * W))
                D[n:] = D[n:] + (h * B[i]) * (G @ D[:n])
        out.append(D)
    return out


@dataclass
class GradientAudit:
    layer_norms: np.ndarray    # ||d z_{k+1} / d z_k||
    suffix_norms: np.ndarray   # ||prod_{i >= k} d z_{i+1} / d z_i||
    layer_residuals: np.ndarray

    @property
    def min_norm(self) -> float:
        return float(min(self.layer_norms.min(), self.suffix_norms.min()))


def gradient_norm_audit(params: NetParams, x) -> GradientAudit:
    from .integrator import symplectic_residual

    Ds = layer_jacobians(params, x)
    layer_norms = np.array([spectral_norm(D) for D in Ds])
    residuals = np.array([symplectic_residual(D) for D in Ds])
    suffix = np.empty(len(Ds))
    prod = np.eye(2 * params.n)
    for k in reversed(range(len(Ds))):
        prod = prod @ Ds[k]
        suffix[k] = spectral_norm(prod)
    return GradientAudit(layer_norms, suffix, residuals)


def _check_restricted(params: NetParams) -> None:
    if np.any(params.W1) or np.any(params.beta1) or np.any(params.eta2):
        raise ValueError("closed form requires W1 = 0, beta1 = 0 and eta2 = 0; "
                         "only W2, beta2 and eta1 may be nonzero")


def uap_closed_form(params: NetParams, x) -> np.ndarray:
    """Evaluate a restricted network as ``sum_j K_j act(V_j x + d_j)``.

    Under the restriction ``p`` only drifts by ``h B_i eta1`` per stage, so
    every stage contributes one ridge term with ``K = h b_i W2^T``,
    ``V = W2`` and ``d = W2 (accumulated p shift) + beta2``.
    """
    _check_restricted(params)
    act = get_activation(params.activation)
    b, B = params.tableau.weights
    h = params.h
    x = np.asarray(x, dtype=float)
    K, V, d = [], [], []
    shift = np.zeros(params.n)
    for k in range(params.N):
        for i in range(params.tableau.s):
            j = 0 if params.share_stages else i
            W = params.W2[k, j]
            if b[i] != 0.0:
                K.append(h * b[i] * W.T)
                V.append(W)
                d.append(W @ shift + params.beta2[k, j])
            if B[i] != 0.0:
                shift = shift + h * B[i] * params.eta1[k, j]
    K, V, d = np.array(K), np.array(V), np.array(d)
    pre = np.einsum("jab,...b->...ja", V, x) + d
    qN = np.einsum("jab,...jb->...a", K, act.value(pre))
    pN = x + shift
    return np.concatenate([qN, pN], axis=-1) @ params.W0.T + params.b0


def _enc(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": [float(v).hex() for v in a.ravel()]}


def _dec(d: dict) -> np.ndarray:
    return np.array([float.fromhex(v) for v in d["data"]], dtype=float).reshape(d["shape"])


def model_to_dict(params: NetParams, **extra) -> dict:
    doc = {
        "tableau": params.tableau.name,
        "h": float(params.h).hex(),
        "N": params.N,
        "n": params.n,
        "m": params.m,
        "activation": params.activation,
        "share_stages": params.share_stages,
    }
    if params.tableau.name not in BUILTIN_NAMES:
        doc["tableau_def"] = params.tableau.to_dict()
    doc["params"] = {k: _enc(v) for k, v in params.arrays().items()}
    doc.update(extra)
    return doc


def model_from_dict(doc: dict) -> NetParams:
    if "tableau_def" in doc:
        tab = PrkTableau.from_dict(doc["tableau_def"], name=doc["tableau"])
    else:
        tab = builtin_tableau(doc["tableau"])
    arrays = {k: _dec(v) for k, v in doc["params"].items()}
    params = NetParams(**arrays, h=float.fromhex(doc["h"]), tableau=tab,
                       activation=doc["activation"], share_stages=bool(doc["share_stages"]))
    if (params.N, params.n, params.m) != (doc["N"], doc["n"], doc["m"]):
        raise ValueError("declared sizes do not match the stored arrays")
    return params


def save_model(params: NetParams, path, **extra) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(params, **extra), fh, indent=1)


def load_model(path) -> tuple[NetParams, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    return model_from_dict(doc), doc
