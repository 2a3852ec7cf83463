"""Partitioned Runge-Kutta tableaux with exact rational condition checks.

A tableau carries two coefficient sets. ``(b, a, c)`` drives the
position-like variable ``q`` and ``(B, A, C)`` drives ``p``. Nodes are never
stored independently: ``c`` is the row sum of ``A`` and ``C`` the row sum of
``a``, which is what makes the autonomous order conditions carry over to
time-dependent separable systems.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "BUILTIN_NAMES",
    "ConditionReport",
    "OrderResidual",
    "PrkTableau",
    "builtin_tableau",
    "check_order_conditions",
    "check_symplectic",
    "explicit_tableau",
    "load_tableau",
]

MAX_STAGES = 16

Matrix = tuple[tuple[Fraction, ...], ...]


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        raise TypeError(f"tableau entries must be exact, got float {x!r}")
    return Fraction(x)


def _row_sums(m: Matrix) -> tuple[Fraction, ...]:
    return tuple(sum(row, Fraction(0)) for row in m)


@dataclass(frozen=True)
class PrkTableau:
    """Exact coefficients of an ``s``-stage partitioned RK method."""

    b: tuple[Fraction, ...]
    B: tuple[Fraction, ...]
    a: Matrix
    A: Matrix
    name: str = "custom"
    c: tuple[Fraction, ...] = field(init=False)
    C: tuple[Fraction, ...] = field(init=False)

    def __post_init__(self):
        conv = lambda v: tuple(_frac(x) for x in v)
        b, B = conv(self.b), conv(self.B)
        a = tuple(conv(r) for r in self.a)
        A = tuple(conv(r) for r in self.A)
        s = len(b)
        if s < 1 or s > MAX_STAGES:
            raise ValueError(f"stage count must be in 1..{MAX_STAGES}, got {s}")
        if len(B) != s:
            raise ValueError(f"len(B)={len(B)} does not match len(b)={s}")
        for label, m in (("a", a), ("A", A)):
            if len(m) != s or any(len(r) != s for r in m):
                raise ValueError(f"{label} must be {s}x{s}")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", _row_sums(A))
        object.__setattr__(self, "C", _row_sums(a))

    @property
    def s(self) -> int:
        return len(self.b)

    @property
    def is_explicit(self) -> bool:
        """True for the lower-triangular layout the stepper can execute.

        ``a`` must equal ``b`` on and below the diagonal and ``A`` must equal
        ``B`` strictly below it, zero elsewhere.
        """
        s, zero = self.s, Fraction(0)
        for i in range(s):
            for j in range(s):
                if self.a[i][j] != (self.b[j] if j <= i else zero):
                    return False
                if self.A[i][j] != (self.B[j] if j < i else zero):
                    return False
        return True

    @cached_property
    def executable(self) -> bool:
        """Explicit and symplectic, i.e. safe for the explicit stepper."""
        return self.is_explicit and check_symplectic(self).symplectic

    @cached_property
    def weights(self) -> tuple[np.ndarray, np.ndarray]:
        """``(b, B)`` as float arrays."""
        return (np.array([float(x) for x in self.b]),
                np.array([float(x) for x in self.B]))

    @cached_property
    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """``(c, C)`` as float arrays."""
        return (np.array([float(x) for x in self.c]),
                np.array([float(x) for x in self.C]))

    def to_dict(self) -> dict:
        fmt = lambda v: [str(x) for x in v]
        return {
            "s": self.s,
            "b": fmt(self.b),
            "B": fmt(self.B),
            "a": [fmt(r) for r in self.a],
            "A": [fmt(r) for r in self.A],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d: dict, name: str = "custom") -> "PrkTableau":
        try:
            s = int(d["s"])
            tab = cls(b=[Fraction(x) for x in d["b"]],
                      B=[Fraction(x) for x in d["B"]],
                      a=[[Fraction(x) for x in r] for r in d["a"]],
                      A=[[Fraction(x) for x in r] for r in d["A"]],
                      name=name)
        except KeyError as exc:
            raise ValueError(f"tableau document is missing key {exc}") from None
        if tab.s != s:
            raise ValueError(f"declared s={s} but weights have length {tab.s}")
        return tab


def explicit_tableau(b: Sequence, B: Sequence, name: str = "custom") -> PrkTableau:
    """Build the explicit lower-triangular tableau determined by ``b`` and ``B``."""
    b = [_frac(x) for x in b]
    B = [_frac(x) for x in B]
    s, zero = len(b), Fraction(0)
    a = [[b[j] if j <= i else zero for j in range(s)] for i in range(s)]
    A = [[B[j] if j < i else zero for j in range(s)] for i in range(s)]
    return PrkTableau(b=b, B=B, a=a, A=A, name=name)


_F = Fraction
_BUILTIN = {
    "euler1": ([1], [1]),
    "sprk2": ([0, 1], [_F(1, 2), _F(1, 2)]),
    "sprk3": ([_F(7, 24), _F(3, 4), _F(-1, 24)], [_F(2, 3), _F(-2, 3), 1]),
    "sprk4": (
        [_F(7, 48), _F(3, 8), _F(-1, 48), _F(-1, 48), _F(3, 8), _F(7, 48)],
        [_F(1, 3), _F(-1, 3), 1, _F(-1, 3), _F(1, 3), 0],
    ),
}
BUILTIN_NAMES = tuple(_BUILTIN)
NOMINAL_ORDER = {"euler1": 1, "sprk2": 2, "sprk3": 3, "sprk4": 4}


def builtin_tableau(kind: str) -> PrkTableau:
    if kind not in _BUILTIN:
        raise ValueError(f"unknown tableau {kind!r}; choose one of {', '.join(BUILTIN_NAMES)}")
    b, B = _BUILTIN[kind]
    return explicit_tableau(b, B, name=kind)


def load_tableau(path) -> PrkTableau:
    with open(path) as fh:
        doc = json.load(fh)
    return PrkTableau.from_dict(doc, name=str(path))


@dataclass
class OrderResidual:
    label: str
    target: Fraction
    computed: Fraction
    order: int

    @property
    def residual(self) -> Fraction:
        return self.computed - self.target


@dataclass
class ConditionReport:
    symplectic_residuals: list[list[Fraction]] | None = None
    node_residuals: list[tuple[str, Fraction]] = field(default_factory=list)
    order_residuals: list[OrderResidual] = field(default_factory=list)
    max_verified_order: int = 0
    nodes_ok: bool = True

    @property
    def symplectic(self) -> bool:
        if self.symplectic_residuals is None:
            return False
        return all(x == 0 for row in self.symplectic_residuals for x in row)


def check_symplectic(t: PrkTableau) -> ConditionReport:
    """Exact residuals ``b_i A_ij + B_j a_ji - b_i B_j`` for all ``i, j``."""
    s = t.s
    res = [[t.b[i] * t.A[i][j] + t.B[j] * t.a[j][i] - t.b[i] * t.B[j]
            for j in range(s)] for i in range(s)]
    return ConditionReport(symplectic_residuals=res)


def _node_residuals(t: PrkTableau) -> list[tuple[str, Fraction]]:
    # c and C are derived from the matrices, so this only fails for
    # hand-constructed objects that bypassed __post_init__.
    out = []
    for i in range(t.s):
        out.append((f"c[{i + 1}] - sum_j A[{i + 1}][j]", t.c[i] - sum(t.A[i], _F(0))))
        out.append((f"C[{i + 1}] - sum_j a[{i + 1}][j]", t.C[i] - sum(t.a[i], _F(0))))
    return out


def _order_conditions(t: PrkTableau, p_max: int) -> list[OrderResidual]:
    s, b, B, a, A, c, C = t.s, t.b, t.B, t.a, t.A, t.c, t.C
    rng = range(s)
    conds = []
    if p_max >= 1:
        conds += [
            OrderResidual("sum b_i", _F(1), sum(b, _F(0)), 1),
            OrderResidual("sum B_i", _F(1), sum(B, _F(0)), 1),
        ]
    if p_max >= 2:
        conds += [
            OrderResidual("sum b_i c_i", _F(1, 2), sum((b[i] * c[i] for i in rng), _F(0)), 2),
            OrderResidual("sum B_i C_i", _F(1, 2), sum((B[i] * C[i] for i in rng), _F(0)), 2),
        ]
    if p_max >= 3:
        conds += [
            OrderResidual("sum b_i c_i^2", _F(1, 3),
                          sum((b[i] * c[i] ** 2 for i in rng), _F(0)), 3),
            OrderResidual("sum b_i A_ij C_j", _F(1, 6),
                          sum((b[i] * A[i][j] * C[j] for i in rng for j in rng), _F(0)), 3),
            OrderResidual("sum B_i C_i^2", _F(1, 3),
                          sum((B[i] * C[i] ** 2 for i in rng), _F(0)), 3),
            OrderResidual("sum B_i a_ij c_j", _F(1, 6),
                          sum((B[i] * a[i][j] * c[j] for i in rng for j in rng), _F(0)), 3),
        ]
    return conds


def check_order_conditions(t: PrkTableau, p_max: int = 3) -> ConditionReport:
    """Evaluate the order conditions up to ``p_max`` (at most 3) exactly.

    When the node conditions fail only the order-1 conditions are evaluated.
    """
    if not 1 <= p_max <= 3:
        raise ValueError("algebraic order checks are available for p_max in 1..3")
    nodes = _node_residuals(t)
    nodes_ok = all(r == 0 for _, r in nodes)
    conds = _order_conditions(t, p_max if nodes_ok else 1)
    verified = 0
    for p in range(1, p_max + 1):
        level = [r for r in conds if r.order == p]
        if not level or any(r.residual != 0 for r in level):
            break
        verified = p
    return ConditionReport(node_residuals=nodes, order_residuals=conds,
                           max_verified_order=verified, nodes_ok=nodes_ok)
