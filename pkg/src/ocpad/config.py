"""Run configuration addressed by dotted keys.

Sections are ``data`` (synthetic generator), ``trainer``, ``baselines`` and
``split``, plus the top-level ``seed``. Values come from defaults, then a
``key=value`` config file, then command-line overrides.
"""
from __future__ import annotations

import dataclasses
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .data import PROTOCOLS, SyntheticSpec
from .errors import ConfigError
from .trainer import TrainerConfig

SEED_ENV = "OCPAD_SEED"


@dataclass
class BaselineConfig:
    ocsvm_nu: float = 0.1
    svdd_nu: float = 0.1
    gmm_components: int | None = None
    gmm_restarts: int = 5
    gmm_max_iter: int = 200
    gmm_tol: float = 1e-6
    gmm_var_floor: float = 1e-6
    sgd_iterations: int = 3000
    sgd_step: float = 1.0
    sgd_batch_size: int | None = None


@dataclass
class SplitConfig:
    protocol: str = "p1"
    fraction: float = 0.5


@dataclass
class RunConfig:
    data: SyntheticSpec = field(default_factory=SyntheticSpec)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    seed: int = 0
    seed_source: str = field(default="default", compare=False)

    SECTIONS = ("data", "trainer", "baselines", "split")

    def keys(self):
        out = ["seed"]
        for sec in self.SECTIONS:
            out.extend(f"{sec}.{f.name}" for f in dataclasses.fields(getattr(self, sec)) if f.name != "seed")
        return out

    def get(self, key):
        if key == "seed":
            return self.seed
        sec, _, name = key.partition(".")
        return getattr(getattr(self, sec), name)

    def set(self, key, raw):
        """Assign ``key`` from a string (or already-typed) value."""
        if key not in self.keys():
            raise ConfigError(f"unknown config key {key!r}")
        if key == "seed":
            self.seed = _coerce(int, raw, key)
            self.seed_source = "explicit"
            return
        sec, _, name = key.partition(".")
        obj = getattr(self, sec)
        hint = typing.get_type_hints(type(obj))[name]
        value = _coerce(hint, raw, key)
        if dataclasses.is_dataclass(obj) and obj.__dataclass_params__.frozen:
            setattr(self, sec, dataclasses.replace(obj, **{name: value}))
        else:
            setattr(obj, name, value)

    def validate(self):
        self.data.validate()
        self.trainer.validate()
        if self.split.protocol not in PROTOCOLS:
            raise ConfigError(f"split.protocol must be one of {PROTOCOLS}")
        if not 0.0 < self.split.fraction < 1.0:
            raise ConfigError("split.fraction must lie in (0, 1)")
        b = self.baselines
        for name in ("ocsvm_nu", "svdd_nu"):
            if not 0.0 < getattr(b, name) <= 1.0:
                raise ConfigError(f"baselines.{name} must lie in (0, 1]")

    def echo(self):
        """Fully resolved ``key=value`` lines, sorted by key."""
        lines = [f"{k}={_render(self.get(k))}" for k in sorted(self.keys())]
        lines.append(f"seed_source={self.seed_source}")
        return lines


def _render(value):
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(hint, raw, key):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    args = typing.get_args(hint)
    if type(None) in args:
        if text.lower() in ("none", ""):
            return None
        hint = next(a for a in args if a is not type(None))
    try:
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        if hint is tuple:
            return tuple(int(v) for v in text.split(",") if v.strip())
        if hint is str:
            return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {hint.__name__}") from None
    raise ConfigError(f"{key}: unsupported type {hint}")


def read_config_file(path):
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    pairs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        pairs.append((key.strip(), value.strip()))
    return pairs


def resolve(config_file=None, overrides=(), env=None) -> RunConfig:
    """Build a RunConfig: defaults < ``$OCPAD_SEED`` < config file < overrides."""
    env = os.environ if env is None else env
    cfg = RunConfig()
    if env.get(SEED_ENV):
        cfg.set("seed", env[SEED_ENV])
        cfg.seed_source = f"env:{SEED_ENV}"
    if config_file is not None:
        for key, value in read_config_file(config_file):
            cfg.set(key, value)
    for key, value in overrides:
        cfg.set(key, value)
    cfg.validate()
    return cfg


def parse_assignment(text):
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"expected key=value, got {text!r}")
    return key.strip(), value
