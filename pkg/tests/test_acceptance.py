"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also gathered in the session summary (see ``conftest.py``).
"""

import json
import time

import numpy as np

from sprknet.cli import main
from sprknet.composed import TrajectoryProblem
from sprknet.experiments.config import default_config
from sprknet.experiments.datasets import gen_kepler, reference_trajectories
from sprknet.experiments.runner import run_classification, run_convergence, run_kepler
from sprknet.hamiltonian import (NetworkFieldParams, harmonic_oscillator, kepler_field,
                                 network_field, test_field_nonautonomous as nonautonomous)
from sprknet.integrator import PhaseState, step_jacobian, symplectic_residual
from sprknet.network import backward, forward, gradient_norm_audit, init_params, uap_closed_form
from sprknet.tableau import BUILTIN_NAMES, builtin_tableau, check_order_conditions, check_symplectic

from _oracles import central_diff, rel_err
from _report import record


def _check(criterion, ok, detail, seconds, limit):
    fast = seconds < limit
    record(criterion, ok and fast, f"{detail}; {seconds:.1f} s (limit {limit} s)")
    assert ok, detail
    assert fast, f"took {seconds:.1f} s, limit {limit} s"


def test_criterion_1_tableau_exactness():
    t0 = time.perf_counter()
    problems = []
    for name, order in zip(BUILTIN_NAMES, (1, 2, 3, 3)):
        tab = builtin_tableau(name)
        sym = check_symplectic(tab)
        if any(x != 0 for row in sym.symplectic_residuals for x in row):
            problems.append(f"{name} symplecticity")
        rep = check_order_conditions(tab, p_max=3)
        if not rep.nodes_ok or any(r != 0 for _, r in rep.node_residuals):
            problems.append(f"{name} nodes")
        if name != "sprk4" and rep.max_verified_order < order:
            problems.append(f"{name} order {rep.max_verified_order} < {order}")
    dt = time.perf_counter() - t0
    _check(1, not problems, "exact zero residuals for all built-ins" if not problems
           else ", ".join(problems), dt, 1)


def test_criterion_2_empirical_order():
    t0 = time.perf_counter()
    rows = run_convergence()
    dt = time.perf_counter() - t0
    targets = {"euler1": (1, 0.3), "sprk2": (2, 0.3), "sprk3": (3, 0.3), "sprk4": (4, 0.4)}
    bad = [r.tableau for r in rows
           if r.slope is None or abs(r.slope - targets[r.tableau][0]) > targets[r.tableau][1]]
    slopes = ", ".join(f"{r.tableau} {r.slope:.3f}" for r in rows if r.slope is not None)
    _check(2, not bad, f"slopes {slopes}", dt, 30)


def test_criterion_3_flow_symplecticity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        kind = rng.integers(4)
        if kind == 0:
            H = harmonic_oscillator(2, rng.uniform(0.5, 2.0))
            q, p = rng.normal(size=(2, 2))
        elif kind == 1:
            W1, W2 = rng.normal(size=(2, 3, 3))
            b1, b2, e1, e2 = rng.normal(size=(4, 3))
            H = network_field(NetworkFieldParams(W1, W2, b1, b2, e1, e2))
            q, p = rng.normal(size=(2, 3))
        elif kind == 2:
            H = kepler_field()
            angle = rng.uniform(0, 2 * np.pi)
            q = rng.uniform(0.7, 1.3) * np.array([np.cos(angle), np.sin(angle)])
            p = rng.normal(size=2)
        else:
            H = nonautonomous()
            q, p = rng.normal(size=(2, 1))
        tab = builtin_tableau(BUILTIN_NAMES[rng.integers(4)])
        h = 10 ** rng.uniform(-3, -1)
        D = step_jacobian(H, PhaseState(q, p), rng.uniform(0, 2), h, tab)
        worst = max(worst, symplectic_residual(D))
    dt = time.perf_counter() - t0
    _check(3, worst <= 1e-10, f"max residual {worst:.2e} over 100 draws", dt, 30)


def test_criterion_4_non_vanishing_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    lowest = np.inf
    for name in BUILTIN_NAMES:
        for depth, share in ((1, False), (10, False), (100, True), (100, False)):
            net = init_params(2, depth, name, h=0.2, share_stages=share, rng=rng)
            for key in ("beta1", "beta2", "eta1", "eta2"):
                getattr(net, key)[...] = 0.5 * rng.normal(size=getattr(net, key).shape)
            audit = gradient_norm_audit(net, rng.normal(size=2))
            lowest = min(lowest, audit.layer_norms.min(), audit.suffix_norms.min())
    dt = time.perf_counter() - t0
    _check(4, lowest >= 1 - 1e-10, f"smallest layer/suffix norm {lowest:.15f}", dt, 60)


def _network_fd_error(name, share, rng):
    N, m = (2, 1) if (name == "sprk4" and not share) else (3, 2)
    net = init_params(2, N, name, m=m, h=0.3, share_stages=share, rng=rng)
    for key in ("beta1", "beta2", "eta1", "eta2", "b0"):
        getattr(net, key)[...] = 0.3 * rng.normal(size=getattr(net, key).shape)
    assert net.n_params() <= 200
    x = rng.normal(size=(3, 2))
    w = rng.normal(size=m)
    out, tape = forward(net, x)
    grads, _ = backward(net, tape, np.broadcast_to(w, out.shape))

    def value(v):
        trial = net.copy()
        trial.set_flat(v)
        return float(np.sum(forward(trial, x)[0] * w))

    an = np.concatenate([g.ravel() for g in grads.values()])
    return rel_err(an, central_diff(value, net.flat()))


def _composed_fd_error(name, compiled, rng):
    trajs = reference_trajectories(np.array([[1.0, 0.0, 0.0, 0.85], [0.0, 1.1, -0.8, 0.1]]), 5, 0.4)
    net = init_params(2, 2, name, m=2, h=0.2, rng=rng)
    for key in ("beta1", "beta2", "eta1", "eta2", "b0"):
        getattr(net, key)[...] = 0.2 * rng.normal(size=getattr(net, key).shape)
    prob = TrajectoryProblem(trajs, compiled=compiled)
    idx = np.arange(2)
    _, g = prob.loss_and_grad(net, idx)

    def value(v):
        trial = net.copy()
        trial.set_flat(v)
        return prob.loss_and_grad(trial, idx)[0]

    an = np.concatenate([a.ravel() for a in g.values()])
    return rel_err(an, central_diff(value, net.flat()))


def test_criterion_5_gradient_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    net_err = max(_network_fd_error(n, s, rng) for n in BUILTIN_NAMES for s in (False, True))
    comp_err = max(_composed_fd_error(n, c, rng) for n in BUILTIN_NAMES for c in (False, True))
    dt = time.perf_counter() - t0
    _check(5, net_err <= 1e-5 and comp_err <= 1e-4,
           f"network rel. error {net_err:.1e} (<= 1e-5), composed {comp_err:.1e} (<= 1e-4)", dt, 60)


def test_criterion_6_closed_form_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    worst = 0.0
    for k in range(50):
        name = BUILTIN_NAMES[k % 4]
        net = init_params(2, int(rng.integers(1, 6)), name, m=2, h=rng.uniform(0.05, 0.5),
                          share_stages=bool(k % 2), rng=rng)
        net.W1[...] = 0.0
        net.beta1[...] = 0.0
        net.eta2[...] = 0.0
        for key in ("W2", "beta2", "eta1", "b0"):
            getattr(net, key)[...] = rng.normal(size=getattr(net, key).shape)
        x = rng.normal(size=(4, 2))
        worst = max(worst, float(np.max(np.abs(uap_closed_form(net, x) - forward(net, x)[0]))))
    dt = time.perf_counter() - t0
    _check(6, worst <= 1e-12, f"max deviation {worst:.1e} over 50 draws", dt, 10)


def test_criterion_7a_classification_trend():
    t0 = time.perf_counter()
    acc = {}
    for name in BUILTIN_NAMES:
        acc[name] = [run_classification(default_config("classify", tableau=name, seed=s))
                     .report["test_metric"] for s in range(5)]
    dt = time.perf_counter() - t0
    med = {k: float(np.median(v)) for k, v in acc.items()}
    ok = med["sprk4"] >= med["euler1"] and min(min(v) for v in acc.values()) >= 60.0
    detail = ("median accuracy " + ", ".join(f"{k} {v:.2f}%" for k, v in med.items())
              + f"; worst single run {min(min(v) for v in acc.values()):.2f}%")
    _check("7a", ok, detail, dt, 600)


def test_criterion_7b_kepler_trend():
    t0 = time.perf_counter()
    datasets = [gen_kepler(s) for s in range(3)]
    err = {}
    for name in BUILTIN_NAMES:
        err[name] = [run_kepler(default_config("kepler", tableau=name, seed=s), ds)
                     .report["test_metric"] for s, ds in enumerate(datasets)]
    dt = time.perf_counter() - t0
    med = [float(np.median(err[n])) for n in BUILTIN_NAMES]
    monotone = all(a >= b for a, b in zip(med, med[1:]))
    ratio_ok = med[3] <= 0.5 * med[0]
    detail = ("median test L2 " + ", ".join(f"{n} {m:.4f}" for n, m in zip(BUILTIN_NAMES, med))
              + f"; non-increasing {monotone}; sprk4/euler1 {med[3] / med[0]:.3f} (<= 0.5)")
    _check("7b", monotone and ratio_ok, detail, dt, 900)


def test_criterion_8_determinism(tmp_path, monkeypatch):
    import sprknet.cli as cli

    monkeypatch.setattr(cli, "gen_kepler", lambda seed: gen_kepler(seed, n_traj=4, n_points=60))
    cfgs = {"train-classify": {"tableau": "sprk3", "layers": 4, "epochs": 5},
            "train-kepler": {"tableau": "sprk4", "layers": 2, "epochs": 3}}
    t0 = time.perf_counter()
    same = []
    for cmd, doc in cfgs.items():
        path = tmp_path / f"{cmd}.json"
        path.write_text(json.dumps(doc))
        outs = []
        for run in range(2):
            out = tmp_path / f"{cmd}-{run}"
            assert main([cmd, "--config", str(path), "--seed", "3", "--out", str(out)]) == 0
            outs.append(((out / "metrics.csv").read_bytes(), (out / "model.json").read_bytes()))
        same.append(outs[0] == outs[1])
    dt = time.perf_counter() - t0
    _check(8, all(same), "repeated classification and Kepler runs give identical metrics and models",
           dt, 600)
