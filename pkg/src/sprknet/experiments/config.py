"""Training configuration files (JSON or TOML) for the two experiments."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, replace

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from ..hamiltonian import ACTIVATIONS
from ..tableau import BUILTIN_NAMES, PrkTableau, builtin_tableau, load_tableau

__all__ = ["ConfigError", "ExperimentConfig", "CONFIG_KEYS", "default_config", "load_config"]

CONFIG_KEYS = ("tableau", "layers", "step_size", "activation", "share_stages", "optimizer",
               "learning_rate", "epochs", "batch_size", "lambda", "seed")

TASKS = ("classify", "kepler")


class ConfigError(ValueError):
    """Malformed or out-of-range configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    tableau: str
    layers: int
    step_size: float
    activation: str
    share_stages: bool
    optimizer: str
    learning_rate: float
    epochs: int
    batch_size: int
    lam: float
    seed: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return {k: d[k] for k in CONFIG_KEYS}

    def with_overrides(self, **kw) -> "ExperimentConfig":
        if "lambda" in kw:
            kw["lam"] = kw.pop("lambda")
        return _validated(replace(self, **kw))

    def resolve_tableau(self) -> PrkTableau:
        if self.tableau in BUILTIN_NAMES:
            return builtin_tableau(self.tableau)
        return load_tableau(self.tableau)


_DEFAULTS = {
    "classify": dict(tableau="sprk4", layers=12, step_size=0.5, activation="tanh",
                     share_stages=True, optimizer="adam", learning_rate=1e-2, epochs=100,
                     batch_size=32, lam=0.0, seed=0),
    "kepler": dict(tableau="sprk4", layers=8, step_size=0.5, activation="tanh",
                   share_stages=False, optimizer="sgd", learning_rate=1e-2, epochs=270,
                   batch_size=1, lam=0.0, seed=0),
}


def default_config(task: str, **overrides) -> ExperimentConfig:
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")
    return ExperimentConfig(**_DEFAULTS[task]).with_overrides(**overrides)


def _validated(cfg: ExperimentConfig) -> ExperimentConfig:
    def need(ok, msg):
        if not ok:
            raise ConfigError(msg)

    need(isinstance(cfg.tableau, str) and cfg.tableau, "tableau must be a non-empty string")
    need(cfg.tableau in BUILTIN_NAMES or os.path.isfile(cfg.tableau),
         f"tableau {cfg.tableau!r} is neither a built-in ({', '.join(BUILTIN_NAMES)}) nor a file")
    for key in ("layers", "epochs", "batch_size"):
        v = getattr(cfg, key)
        need(isinstance(v, int) and not isinstance(v, bool) and v >= 1, f"{key} must be an integer >= 1")
    need(isinstance(cfg.seed, int) and not isinstance(cfg.seed, bool) and cfg.seed >= 0,
         "seed must be a non-negative integer")
    for key, lo_open in (("step_size", True), ("learning_rate", False), ("lam", False)):
        v = getattr(cfg, key)
        name = "lambda" if key == "lam" else key
        need(isinstance(v, (int, float)) and not isinstance(v, bool), f"{name} must be a number")
        need(v > 0 if lo_open else v >= 0, f"{name} must be {'>' if lo_open else '>='} 0")
    need(cfg.activation in ACTIVATIONS, f"activation must be one of {sorted(ACTIVATIONS)}")
    need(isinstance(cfg.share_stages, bool), "share_stages must be true or false")
    need(cfg.optimizer in ("sgd", "adam"), "optimizer must be 'sgd' or 'adam'")
    return replace(cfg, step_size=float(cfg.step_size), learning_rate=float(cfg.learning_rate),
                   lam=float(cfg.lam))


def load_config(path, task: str) -> ExperimentConfig:
    """Read a JSON or TOML file; missing keys take the task defaults."""
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        if path.endswith(".toml"):
            doc = tomllib.loads(raw.decode())
        else:
            doc = json.loads(raw)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    unknown = sorted(set(doc) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "tableau" not in doc:
        raise ConfigError("config must name a tableau")
    try:
        return default_config(task, **doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
