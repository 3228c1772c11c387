"""Flat ``key = value`` experiment configuration.

Lines hold one ``key = value`` pair; ``#`` starts a comment.  Only
``experiment`` is required: every other key falls back to the defaults
of the chosen experiment.  Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

EXPERIMENTS = (
    "naive-inconsistency",
    "iq-twostate",
    "supply-mkv",
    "supply-mfg",
    "head-to-head",
    "value-iteration",
    "identity-check",
)


class ConfigError(ValueError):
    pass


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    repeats: int = 1
    workers: int = 1
    out: str = "results"
    # two-state benchmark
    p: float = 0.6
    lambda0: float = 0.5
    lambda1: float = 0.8
    penalty: float = 5.0
    gamma: float = 0.5
    N_s: int = 20
    N_a: int = 20
    l: float = 0.4
    T: int = 20
    epsilon: float = 0.1
    p0_list: tuple = (0.01, 0.5, 0.99)
    mean_field: bool = True
    tol: float = 1e-10
    max_iters: int = 1000
    # identity check
    num_mdps: int = 20
    num_pairs: int = 100
    # supply game
    cost: float = 1.0
    kappa: float = 1.0
    demand_mean: float = 2.0
    demand_var: float = 0.25
    beta: float = 1.0
    mode: str = "sampled"
    rounds: int = 1000
    initial_price: int = 10

    def replace(self, **changes) -> "ExperimentConfig":
        return validate(dataclasses.replace(self, **changes))

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


# Config-file key -> (dataclass field, parser)
_KEYS = {
    "experiment": ("experiment", str),
    "seed": ("seed", int),
    "repeats": ("repeats", int),
    "workers": ("workers", int),
    "out": ("out", str),
    "p": ("p", float),
    "lambda0": ("lambda0", float),
    "lambda1": ("lambda1", float),
    "lambda": ("penalty", float),
    "gamma": ("gamma", float),
    "N_s": ("N_s", int),
    "N_a": ("N_a", int),
    "N": ("N", int),
    "l": ("l", float),
    "T": ("T", int),
    "epsilon": ("epsilon", float),
    "p0_list": ("p0_list", _float_list),
    "mean_field": ("mean_field", _bool),
    "tol": ("tol", float),
    "max_iters": ("max_iters", int),
    "num_mdps": ("num_mdps", int),
    "num_pairs": ("num_pairs", int),
    "cost": ("cost", float),
    "kappa": ("kappa", float),
    "demand_mean": ("demand_mean", float),
    "demand_var": ("demand_var", float),
    "beta": ("beta", float),
    "mode": ("mode", str),
    "rounds": ("rounds", int),
    "initial_price": ("initial_price", int),
}

_TWOSTATE_IQ = dict(T=20, l=0.4, gamma=0.5, p=0.6, lambda0=0.5, lambda1=0.8, penalty=5.0, N_s=20, N_a=20)
_SUPPLY = dict(T=100, N_a=20, l=0.1, gamma=0.6, tol=1e-2)

DEFAULTS = {
    "naive-inconsistency": dict(T=10000, p=0.6, lambda0=0.5, lambda1=0.8, penalty=10.0, gamma=0.5),
    "iq-twostate": dict(_TWOSTATE_IQ, repeats=20),
    "value-iteration": dict(_TWOSTATE_IQ, tol=1e-10, max_iters=1000),
    "identity-check": dict(gamma=0.5, tol=1e-13),
    "supply-mkv": dict(_SUPPLY),
    "supply-mfg": dict(_SUPPLY),
    "head-to-head": dict(_SUPPLY),
}


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    def bad(name, why):
        raise ConfigError(f"{name}: {why}")

    if cfg.experiment not in EXPERIMENTS:
        bad("experiment", f"unknown experiment {cfg.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    if not 0.0 < cfg.gamma < 1.0:
        bad("gamma", f"must lie in (0, 1), got {cfg.gamma}")
    for name in ("p", "lambda0", "lambda1", "epsilon", "l"):
        v = getattr(cfg, name)
        if not 0.0 <= v <= 1.0:
            bad(name, f"must lie in [0, 1], got {v}")
    if cfg.experiment in ("naive-inconsistency", "iq-twostate", "value-iteration"):
        if not 1.0 - cfg.lambda0 <= cfg.p <= cfg.lambda1:
            bad("p", f"need 1 - lambda0 <= p <= lambda1, got p={cfg.p}")
    if cfg.penalty < 0.0:
        bad("lambda", f"must be >= 0, got {cfg.penalty}")
    for name in ("N_s", "N_a", "repeats", "workers", "max_iters", "num_mdps", "num_pairs"):
        if getattr(cfg, name) < 1:
            bad(name, f"must be >= 1, got {getattr(cfg, name)}")
    for name in ("T", "rounds", "seed"):
        if getattr(cfg, name) < 0:
            bad(name, f"must be >= 0, got {getattr(cfg, name)}")
    if not all(0.0 <= x <= 1.0 for x in cfg.p0_list) or not cfg.p0_list:
        bad("p0_list", "needs one or more values in [0, 1]")
    if cfg.tol <= 0.0:
        bad("tol", f"must be > 0, got {cfg.tol}")
    if cfg.kappa <= 0.0:
        bad("kappa", f"must be > 0, got {cfg.kappa}")
    if cfg.cost < 0.0:
        bad("cost", f"must be >= 0, got {cfg.cost}")
    if cfg.demand_var < 0.0:
        bad("demand_var", f"must be >= 0, got {cfg.demand_var}")
    if cfg.beta <= 0.0:
        bad("beta", f"must be > 0, got {cfg.beta}")
    if cfg.mode not in ("sampled", "exact"):
        bad("mode", f"must be 'sampled' or 'exact', got {cfg.mode!r}")
    if not 0 <= cfg.initial_price < 20:
        bad("initial_price", f"must lie in 0..19, got {cfg.initial_price}")
    return cfg


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    raw: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        name, parser = _KEYS[key]
        try:
            raw[name] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    if "experiment" not in raw:
        raise ConfigError(f"{source}: missing required key 'experiment'")
    return build_config(**raw)


def build_config(experiment: str, **values) -> ExperimentConfig:
    """Experiment defaults overlaid with ``values``; ``N`` sets both grid resolutions."""
    if experiment not in DEFAULTS:
        raise ConfigError(f"experiment: unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    if "N" in values:
        n = values.pop("N")
        values.setdefault("N_s", n)
        values.setdefault("N_a", n)
    merged = {**DEFAULTS[experiment], **values}
    return validate(ExperimentConfig(experiment=experiment, **merged))


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))
