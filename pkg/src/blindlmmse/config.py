"""Experiment configuration: presets, flat ``key = value`` files, overrides."""

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ArtifactIOError, ConfigError

PAPER_LAMBDA_ALPHA = (1e-4, 9e-4, 1e-3, 1e-2, 1e-1, 1.0)
PAPER_LAMBDA_H = (1e-4, 9e-4, 1e-3, 1e-2, 1e-1)
N_SAMPLES = (64, 128, 256, 512, 1024, 2048)


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    K: int
    b: float
    d: int
    a: float
    beta: float
    c_eps: float
    dataset_size: int
    base_seed: int
    lambda_alpha_grid: tuple
    lambda_h_grid: tuple
    quad_nodes: int = 64
    ridge: float = None
    step_alpha: float = 1e-1
    step_h: float = 1e-3
    inner_steps: int = 5
    max_iter: int = 1000
    sigma_floor: float = 1e-3
    n_samples_list: tuple = N_SAMPLES
    repeats: int = 10
    heldout_size: int = 20
    workers: int = 1

    def __post_init__(self):
        if not self.lambda_alpha_grid or not self.lambda_h_grid:
            raise ConfigError("lambda grids must be non-empty")
        if self.dataset_size < 1:
            raise ConfigError("dataset_size must be >= 1")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.d % 2 == 0 or self.d > self.n:
            raise ConfigError(f"kernel side d={self.d} must be odd and <= n={self.n}")
        if self.K > self.n * self.n:
            raise ConfigError(f"K={self.K} exceeds n^2={self.n * self.n}")
        if list(self.n_samples_list) != sorted(self.n_samples_list):
            raise ConfigError("n_samples_list must be sorted ascending")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def as_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


def paper_preset(seed=0):
    return ExperimentConfig(n=32, K=512, b=0.5, d=15, a=2.0, beta=1.0, c_eps=0.0009,
                            dataset_size=50, base_seed=seed,
                            lambda_alpha_grid=PAPER_LAMBDA_ALPHA, lambda_h_grid=PAPER_LAMBDA_H)


def desk_preset(seed=0):
    return ExperimentConfig(n=16, K=128, b=0.5, d=7, a=2.0, beta=1.0, c_eps=0.0009,
                            dataset_size=10, base_seed=seed, max_iter=300,
                            lambda_alpha_grid=(9e-4, 1e-2, 1e-1, 1.0),
                            lambda_h_grid=(9e-4, 1e-3, 1e-1))


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_LIST_FIELDS = {"lambda_alpha_grid", "lambda_h_grid", "n_samples_list"}
_INT_FIELDS = {"n", "K", "d", "dataset_size", "base_seed", "quad_nodes", "inner_steps",
               "max_iter", "repeats", "heldout_size", "workers"}
REQUIRED = [f.name for f in fields(ExperimentConfig)
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING]


def parse_value(key, text):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    text = text.strip()
    try:
        if key in _LIST_FIELDS:
            items = [t.strip() for t in text.split(",") if t.strip()]
            conv = int if key == "n_samples_list" else float
            return tuple(conv(t) for t in items)
        if key == "ridge":
            return None if text.lower() in ("", "none", "auto") else float(text)
        if key in _INT_FIELDS:
            return int(text)
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {text!r}") from exc


def read_config_file(path):
    """Parse a flat ``key = value`` file into a dict of typed values."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except FileNotFoundError:
        raise ArtifactIOError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ArtifactIOError(f"cannot read config file {path}: {exc}") from exc
    values = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, val = line.split("=", 1)
        values[key.strip()] = parse_value(key.strip(), val)
    return values


def build_config(base=None, values=None, **overrides):
    """Merge a preset (or nothing), file values and overrides; every required key must end up set."""
    merged = base.as_dict() if base is not None else {}
    merged.update(values or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    missing = [k for k in REQUIRED if k not in merged]
    if missing:
        raise ConfigError(f"missing config key(s): {', '.join(missing)}")
    for k in _LIST_FIELDS:
        if k in merged:
            merged[k] = tuple(merged[k])
    return ExperimentConfig(**merged)


def write_config_file(cfg, path):
    lines = []
    for k, v in cfg.as_dict().items():
        if isinstance(v, list):
            v = ", ".join(repr(x) for x in v)
        elif v is None:
            v = "auto"
        lines.append(f"{k} = {v}")
    Path(path).write_text("\n".join(lines) + "\n")
