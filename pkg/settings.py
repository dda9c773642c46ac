"""
Run configuration: built-in defaults, then an INI-style ``key = value`` file,
then command-line flags.
"""

import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

from PyQt5.QtCore import QSettings

from errors import DataError, UsageError
from model import TrainConfig

OUT_ENV = "GDP_OUT"


def default_out() -> str:
    return os.environ.get(OUT_ENV, "./out")


@dataclass
class RunConfig:
    system: Optional[str] = None
    graph: Optional[str] = None
    dt: str = "1"
    traj: int = 30
    length: int = 20
    n_valid: int = 10
    n_test: int = 0
    seed: int = 0
    seeds: str = "0"
    data: Optional[str] = None
    out: Optional[str] = None
    jobs: int = 1
    # training
    epochs: int = 3000
    lr_generator: float = 0.1
    lr_surrogate: float = 0.0005
    beta_gen: float = 0.5
    K: str = "4"
    hidden: int = 256
    hidden_layers: int = 2
    val_every: int = 10
    tied: Optional[bool] = None
    baseline: Optional[str] = None
    bins: Optional[int] = None
    quantile: bool = False
    # systems
    rossler_standard_form: bool = False
    kuramoto_k: float = 1.0
    # experiments
    mode: str = "continuous"
    coupling: float = 1.0
    t: str = "1e-5"
    eps: str = "0,0.01,0.02,0.05,0.1"
    draws: int = 50
    warmup: int = 1000
    window: int = 50
    control: bool = False
    fractions: str = "0,0.1,0.3,0.5"
    runs: int = 10
    p_grid: str = "0,0.25,0.5,1"
    traj_grid: str = "5,10,20,50,100"
    full_size: bool = False

    def resolved_out(self) -> Path:
        return Path(self.out or default_out())

    def train_config(self, **overrides) -> TrainConfig:
        cfg = TrainConfig(
            epochs=self.epochs,
            lr_generator=self.lr_generator,
            lr_surrogate=self.lr_surrogate,
            beta_gen=self.beta_gen,
            K=parse_int_grid(self.K)[0],
            hidden=self.hidden,
            hidden_layers=self.hidden_layers,
            val_every=self.val_every,
            tied=self.tied,
        )
        for key, value in overrides.items():
            setattr(cfg, key, value)
        return cfg.validate()

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["out"] = str(self.resolved_out())
        return data


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_KEY_ALIASES = {"len": "length"}


def _field_name(key: str) -> str:
    name = key.replace("-", "_")
    return _KEY_ALIASES.get(name, name)


def _coerce(name: str, value):
    if value is None:
        return None
    kind = _FIELD_TYPES[name]
    if isinstance(value, (list, tuple)):
        value = ",".join(str(v) for v in value)
    text = str(value).strip()
    try:
        if kind in (bool, Optional[bool]):
            if isinstance(value, bool):
                return value
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind in (int, Optional[int]):
            return int(text)
        if kind is float:
            return float(text)
    except ValueError as exc:
        raise UsageError(f"invalid value {text!r} for {name}") from exc
    return text


def read_config_file(path) -> Dict[str, Any]:
    """Flat ``key = value`` pairs; keys may use dashes or underscores."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"config file not found: {path}")
    settings = QSettings(str(path), QSettings.IniFormat)
    values = {}
    for key in settings.allKeys():
        name = _field_name(key.split("/")[-1])
        if name not in _FIELD_TYPES:
            raise UsageError(f"unknown config key {key!r} in {path}")
        values[name] = _coerce(name, settings.value(key))
    return values


def resolve_config(config_file=None, overrides: Optional[Dict[str, Any]] = None,
                   base: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Defaults, then ``base`` (command presets), then the config file, then non-None ``overrides``."""
    values: Dict[str, Any] = {k: _coerce(k, v) for k, v in (base or {}).items()}
    if config_file:
        values.update(read_config_file(config_file))
    for key, value in (overrides or {}).items():
        name = _field_name(key)
        if value is None:
            continue
        if name not in _FIELD_TYPES:
            raise UsageError(f"unknown option {key!r}")
        values[name] = _coerce(name, value)
    return RunConfig(**values)


def parse_int_grid(text) -> List[int]:
    """``"0..4"`` (inclusive), ``"0,1,2"`` or a single integer."""
    items = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                lo, hi = (int(p) for p in part.split(".."))
                if hi < lo:
                    raise ValueError(part)
                items.extend(range(lo, hi + 1))
            else:
                items.append(int(part))
        except ValueError as exc:
            raise UsageError(f"bad integer list {text!r}") from exc
    if not items:
        raise UsageError(f"empty integer list {text!r}")
    return items


def parse_float_grid(text) -> List[float]:
    """Comma-separated reals; integer ranges ``a..b`` are accepted too."""
    items = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            items.extend(float(v) for v in parse_int_grid(part))
            continue
        try:
            items.append(float(part))
        except ValueError as exc:
            raise UsageError(f"bad number list {text!r}") from exc
    if not items:
        raise UsageError(f"empty number list {text!r}")
    return items
