"""Command line entry point: ``sprknet <subcommand>``.

Exit codes: 0 success, 1 verification or training failure, 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .composed import TrajectoryProblem
from .integrator import Trajectory
from .network import load_model, save_model
from .tableau import BUILTIN_NAMES, builtin_tableau, load_tableau
from .training import ClassificationProblem, TrainingDivergedError
from .experiments.config import ConfigError, load_config
from .experiments.runner import (convergence_csv, run_classification, run_convergence,
                                 run_kepler, run_verify, tableau_json)
from .experiments.datasets import gen_classification, gen_kepler

EXIT_OK, EXIT_FAIL, EXIT_BAD_INPUT = 0, 1, 2

log = logging.getLogger("sprknet")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_BAD_INPUT, f"{self.prog}: error: {message}\n")


def _cmd_verify(args) -> int:
    if args.file:
        try:
            tabs = [load_tableau(args.file)]
        except (OSError, ValueError, TypeError, ZeroDivisionError) as exc:
            print(f"error: cannot load tableau: {exc}", file=sys.stderr)
            return EXIT_BAD_INPUT
    elif args.name:
        try:
            tabs = [builtin_tableau(args.name)]
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_BAD_INPUT
    else:
        tabs = [builtin_tableau(n) for n in BUILTIN_NAMES]
    ok = True
    for tab in tabs:
        cert = run_verify(tab)
        print(cert.render())
        print()
        ok = ok and cert.ok
    if args.emit:
        if len(tabs) != 1:
            print("error: --emit needs a single tableau", file=sys.stderr)
            return EXIT_BAD_INPUT
        with open(args.emit, "w") as fh:
            fh.write(tableau_json(tabs[0]))
    return EXIT_OK if ok else EXIT_FAIL


def _cmd_convergence(args) -> int:
    rows = run_convergence()
    text = convergence_csv(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def _write_run(out_dir, result, test_data_writer) -> None:
    os.makedirs(out_dir, exist_ok=True)
    result.metrics.to_csv(os.path.join(out_dir, "metrics.csv"))
    save_model(result.params, os.path.join(out_dir, "model.json"), task=result.task)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(result.report, fh, indent=1)
        fh.write("\n")
    test_data_writer(out_dir)


def _write_points(path, X, y) -> None:
    np.savetxt(path, np.column_stack([X, y]), delimiter=",", header="x1,x2,label",
               comments="", fmt="%.17g")


def _read_points(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 3:
        raise ValueError("point CSV must have columns x1,x2,label")
    return data[:, :2], data[:, 2]


def _cmd_train(args, task) -> int:
    try:
        cfg = load_config(args.config, task)
        if args.seed is not None:
            cfg = cfg.with_overrides(seed=args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    out = args.out or f"sprknet-{task}-{os.path.basename(cfg.tableau)}-seed{cfg.seed}"
    try:
        if task == "classify":
            ds = gen_classification(cfg.seed)
            result = run_classification(cfg, ds)
            writer = lambda d: _write_points(os.path.join(d, "test_points.csv"), *ds.test)
        else:
            ds = gen_kepler(cfg.seed)
            result = run_kepler(cfg, ds)
            writer = lambda d: ds.test.to_csv(os.path.join(d, "test_trajectory.csv"))
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        if exc.metrics is not None:
            os.makedirs(out, exist_ok=True)
            exc.metrics.to_csv(os.path.join(out, "metrics.csv"))
        return EXIT_FAIL
    _write_run(out, result, writer)
    print(json.dumps(result.report))
    return EXIT_OK


def _cmd_eval(args) -> int:
    try:
        params, doc = load_model(args.model)
        task = doc.get("task")
        if task == "classify":
            X, y = _read_points(args.data)
            metric = ClassificationProblem(X, y).test_metric(params)
        elif task == "kepler":
            traj = Trajectory.from_csv(args.data)
            metric = TrajectoryProblem([traj], traj).test_metric(params)
        else:
            raise ValueError(f"model file has unknown task {task!r}")
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    print(json.dumps({"task": task, "tableau": params.tableau.name, "test_metric": metric}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sprknet", description="Symplectic PRK networks: verification and experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify-tableau", help="print the exact condition certificate")
    g = v.add_mutually_exclusive_group()
    g.add_argument("--file", help="tableau JSON file")
    g.add_argument("--name", help=f"built-in tableau ({', '.join(BUILTIN_NAMES)})")
    v.add_argument("--emit", metavar="PATH", help="re-emit the tableau as canonical JSON")
    v.set_defaults(func=_cmd_verify)

    c = sub.add_parser("convergence", help="empirical order table for the built-in tableaux")
    c.add_argument("--out", metavar="CSV")
    c.set_defaults(func=_cmd_convergence)

    for name, task in (("train-classify", "classify"), ("train-kepler", "kepler")):
        t = sub.add_parser(name, help=f"train the {task} experiment")
        t.add_argument("--config", required=True, help="JSON or TOML config")
        t.add_argument("--seed", type=int)
        t.add_argument("--out", metavar="DIR")
        t.set_defaults(func=lambda a, task=task: _cmd_train(a, task))

    e = sub.add_parser("eval", help="evaluate a saved model on a data file")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True, help="test_points.csv or a trajectory CSV")
    e.set_defaults(func=_cmd_eval)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
