"""End-to-end experiment runs, convergence tables and tableau certificates."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from ..composed import TrajectoryProblem
from ..hamiltonian import test_field_nonautonomous
from ..integrator import OrderSaturationError, PhaseState, Trajectory, estimate_order
from ..network import NetParams, init_params
from ..tableau import (BUILTIN_NAMES, NOMINAL_ORDER, PrkTableau, builtin_tableau,
                       check_order_conditions, check_symplectic)
from ..training import ClassificationProblem, LossSpec, Metrics, OptimizerState, train
from .config import ExperimentConfig
from .datasets import gen_classification, gen_kepler

__all__ = [
    "Certificate",
    "ConvergenceRow",
    "RunResult",
    "convergence_csv",
    "free_drift_error",
    "run_classification",
    "run_convergence",
    "run_kepler",
    "run_verify",
]

# convergence study setup on the non-autonomous test system
CONVERGENCE_STATE = (1.0, 0.5)
CONVERGENCE_T = 1.0
CONVERGENCE_STEPS = (0.1, 0.05, 0.025, 0.0125)
SLOPE_TOLERANCE = {1: 0.3, 2: 0.3, 3: 0.3, 4: 0.4}


@dataclass
class RunResult:
    task: str
    config: ExperimentConfig
    params: NetParams
    metrics: Metrics
    report: dict


def _optimizer(cfg: ExperimentConfig) -> OptimizerState:
    return OptimizerState(cfg.optimizer, cfg.learning_rate)


def _report(cfg, tab, metrics, **extra) -> dict:
    report = {"tableau": tab.name, "test_metric": metrics.final.test_metric,
              "min_layer_norm": metrics.min_layer_norm}
    report.update(extra)
    return report


def run_classification(cfg: ExperimentConfig, dataset=None) -> RunResult:
    """Train the point classifier; ``test_metric`` is test accuracy in percent."""
    ds = gen_classification(cfg.seed) if dataset is None else dataset
    tab = cfg.resolve_tableau()
    net = init_params(2, cfg.layers, tab, m=1, h=cfg.step_size, activation=cfg.activation,
                      share_stages=cfg.share_stages, rng=cfg.seed)
    (X, y), (Xt, yt) = ds.train, ds.test
    problem = ClassificationProblem(X, y, Xt, yt, lam=cfg.lam)
    initial_accuracy = problem.test_metric(net)
    net, metrics = train(net, problem, LossSpec("binary_classification", cfg.lam), _optimizer(cfg),
                         cfg.epochs, cfg.batch_size, cfg.seed)
    report = _report(cfg, tab, metrics, task="classify", seed=cfg.seed,
                     initial_test_metric=initial_accuracy)
    return RunResult("classify", cfg, net, metrics, report)


def free_drift_error(test: Trajectory) -> float:
    """L2 error of the zero-force prediction ``q(t) = q0 + t p0``, ``p(t) = p0``."""
    t = test.times - test.times[0]
    q = test.q[0] + t[:, None] * test.p[0]
    d = np.concatenate([q - test.q, test.p[0] - test.p], axis=1)
    return float(np.sqrt(np.sum(d * d)))


def run_kepler(cfg: ExperimentConfig, dataset=None) -> RunResult:
    """Learn the Kepler force inside the integrator; ``test_metric`` is the L2 error."""
    ds = gen_kepler(cfg.seed) if dataset is None else dataset
    tab = cfg.resolve_tableau()
    net = init_params(2, cfg.layers, tab, m=2, h=cfg.step_size, activation=cfg.activation,
                      share_stages=cfg.share_stages, rng=cfg.seed)
    problem = TrajectoryProblem(ds.trajectories, ds.test, lam=cfg.lam)
    net, metrics = train(net, problem, LossSpec("trajectory_l2", cfg.lam), _optimizer(cfg),
                         cfg.epochs, cfg.batch_size, cfg.seed)
    report = _report(cfg, tab, metrics, task="kepler", seed=cfg.seed,
                     free_drift_test_metric=free_drift_error(ds.test))
    return RunResult("kepler", cfg, net, metrics, report)


@dataclass
class ConvergenceRow:
    tableau: str
    nominal_order: int | None
    slope: float | None
    status: str


def _slope(tab: PrkTableau) -> tuple[float | None, str]:
    H = test_field_nonautonomous()
    state = PhaseState([CONVERGENCE_STATE[0]], [CONVERGENCE_STATE[1]])
    try:
        return estimate_order(H, state, 0.0, CONVERGENCE_T, tab, CONVERGENCE_STEPS), "ok"
    except OrderSaturationError as exc:
        return None, f"saturated: {exc}"


def run_convergence(tableaux=BUILTIN_NAMES) -> list[ConvergenceRow]:
    rows = []
    for t in tableaux:
        tab = builtin_tableau(t) if isinstance(t, str) else t
        slope, status = _slope(tab)
        rows.append(ConvergenceRow(tab.name, NOMINAL_ORDER.get(tab.name), slope, status))
    return rows


def convergence_csv(rows: list[ConvergenceRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tableau", "nominal_order", "slope", "status"])
    for r in rows:
        w.writerow([r.tableau, "" if r.nominal_order is None else r.nominal_order,
                    "" if r.slope is None else f"{r.slope:.6f}", r.status])
    return buf.getvalue()


@dataclass
class Certificate:
    tableau: PrkTableau
    symplectic_residuals: list
    node_residuals: list
    order_residuals: list
    max_verified_order: int
    slope: float | None
    slope_status: str
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def render(self) -> str:
        t = self.tableau
        lines = [f"tableau {t.name} (s={t.s})", "symplectic residuals b_i A_ij + B_j a_ji - b_i B_j:"]
        for row in self.symplectic_residuals:
            lines.append("  " + " ".join(f"{str(x):>6}" for x in row))
        lines.append("node residuals:")
        lines += [f"  {label} = {r}" for label, r in self.node_residuals]
        lines.append("order residuals:")
        lines += [f"  [{r.order}] {r.label} - {r.target} = {r.residual}" for r in self.order_residuals]
        lines.append(f"max verified order (algebraic, <= 3): {self.max_verified_order}")
        lines.append("empirical slope: " + ("n/a" if self.slope is None else f"{self.slope:.4f}")
                     + ("" if self.slope_status == "ok" else f" ({self.slope_status})"))
        lines += [f"FAIL {f}" for f in self.failures]
        lines.append("PASS" if self.ok else "FAIL")
        return "\n".join(lines)


def run_verify(tab: PrkTableau, nominal_order: int | None = None) -> Certificate:
    """Exact condition residuals plus an empirical slope for one tableau.

    Order conditions are required up to ``min(nominal_order, 3)``; the
    nominal order defaults to the built-in value or 1 for other tableaux.
    The empirical slope is checked only when a nominal order is known.
    """
    if nominal_order is None:
        nominal_order = NOMINAL_ORDER.get(tab.name, 1)
    failures = []
    sym = check_symplectic(tab)
    if not sym.symplectic:
        failures.append("symplecticity residual is nonzero")
    if not tab.is_explicit:
        failures.append("tableau is not explicit")
    orders = check_order_conditions(tab, p_max=3)
    if not orders.nodes_ok:
        failures.append("node conditions fail")
    required = min(nominal_order, 3)
    bad = [r for r in orders.order_residuals if r.order <= required and r.residual != 0]
    if bad:
        failures.append("order conditions fail: " + ", ".join(r.label for r in bad))
    slope, status = (None, "skipped: tableau is not executable")
    if not failures:
        slope, status = _slope(tab)
        tol = SLOPE_TOLERANCE.get(nominal_order, 0.4)
        if slope is not None and tab.name in NOMINAL_ORDER and abs(slope - nominal_order) > tol:
            failures.append(f"empirical slope {slope:.3f} is not within {tol} of {nominal_order}")
    return Certificate(tab, sym.symplectic_residuals, orders.node_residuals, orders.order_residuals,
                       orders.max_verified_order, slope, status, failures)


def tableau_json(tab: PrkTableau) -> str:
    """Canonical file form: two-space indented JSON with a trailing newline."""
    return json.dumps(tab.to_dict(), indent=2) + "\n"
