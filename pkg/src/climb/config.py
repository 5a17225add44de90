"""
Run configuration: one JSON document per command, loaded into typed dataclasses.
Unknown or missing keys are rejected before any output is written.
"""

import json
import logging
from dataclasses import MISSING, dataclass, field, fields, is_dataclass
from enum import Enum
from pathlib import Path

from tensorkit.errors import INVALID_CONFIG
from tensorkit.utils import ConfigError, TensorError

from .model import ModelKind
from .regularization import RegConfig
from .solver import SolverConfig
from .synth import SyntheticSpec

log = logging.getLogger("climb.config")
log.setLevel(logging.INFO)

MODEL_KINDS = [k.value for k in ModelKind]


def dataclass_non_defaults(obj) -> dict:
    """
    For a ``dataclass`` instance get the fields that are different from the
    default values and return as ``dict``; nested dataclasses are reduced the same way.
    """
    if not is_dataclass(obj):
        raise TypeError(f"Object {obj} is not a dataclass")
    out = {}
    for f in fields(obj):
        value = getattr(obj, f.name)
        if f.default is not MISSING:
            default = f.default
        elif f.default_factory is not MISSING:
            default = f.default_factory()
        else:
            default = MISSING
        if is_dataclass(value):
            nested = dataclass_non_defaults(value)
            if nested or default is MISSING:
                out[f.name] = nested
            continue
        if value == default or value != value or (isinstance(value, list) and value == []):
            continue
        out[f.name] = _plain(value)
    return out


def _plain(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


@dataclass
class SimulateConfig:
    synthetic: SyntheticSpec | None = None
    input: Path | None = None
    # input only; synthetic data carries these in its own block
    preset: str | None = None
    snr_db: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if (self.synthetic is None) == (self.input is None):
            raise ConfigError(INVALID_CONFIG, "simulate needs exactly one of 'synthetic' or 'input'")
        if self.synthetic is not None:
            stray = [k for k in ("preset", "snr_db", "seed") if getattr(self, k) is not None]
            if stray:
                raise ConfigError(INVALID_CONFIG, f"{stray} belong inside 'synthetic' for synthetic data")
        else:
            self.preset = self.preset or "desk"
            self.seed = 0 if self.seed is None else self.seed


@dataclass
class FuseConfig:
    hsi: Path
    msi: Path
    degradation: Path
    ranks: tuple[int, int, int]
    R: int = 1
    blind: bool = False
    # "standard" data-driven start, or "truth" = truth model moved by `perturbation`
    init: str = "standard"
    truth: Path | None = None
    perturbation: float = 0.01
    reference: Path | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int | None = 0

    def __post_init__(self):
        self.ranks = tuple(int(n) for n in self.ranks)
        if len(self.ranks) != 3 or self.R < 1:
            raise ConfigError(INVALID_CONFIG, f"ranks {self.ranks} with R={self.R}")
        if self.init not in ("standard", "truth"):
            raise ConfigError(INVALID_CONFIG, f"init must be 'standard' or 'truth', got {self.init!r}")
        if self.init == "truth" and self.truth is None:
            raise ConfigError(INVALID_CONFIG, "init 'truth' needs a 'truth' model manifest")


@dataclass
class FitConfig:
    input: Path | None = None
    # generate_ev_tensor arguments (dims, R, ranks, variability); one tensor per seed
    ev: dict | None = None
    # explicit [{"kind": ..., "rank_spec": ...}], or budget-matched from `kinds`
    models: list = field(default_factory=list)
    budget: int | None = None
    kinds: list = field(default_factory=lambda: list(MODEL_KINDS))
    R: int = 1
    N: int | None = None
    seeds: list = field(default_factory=lambda: [0])
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if (self.input is None) == (self.ev is None):
            raise ConfigError(INVALID_CONFIG, "fit needs exactly one of 'input' or 'ev'")
        if not self.models and self.budget is None:
            raise ConfigError(INVALID_CONFIG, "fit needs 'models' or a parameter 'budget'")
        unknown = sorted(set(self.kinds) - set(MODEL_KINDS))
        if unknown:
            raise ConfigError(INVALID_CONFIG, f"unknown model kinds {unknown}")
        for m in self.models:
            if set(m) != {"kind", "rank_spec"} or m["kind"] not in MODEL_KINDS:
                raise ConfigError(INVALID_CONFIG, f"model entry {m} needs a known 'kind' and a 'rank_spec'")
        if self.ev is not None:
            unknown = sorted(set(self.ev) - {"dims", "R", "ranks", "variability"})
            if unknown:
                raise ConfigError(INVALID_CONFIG, f"ev: unknown keys {unknown}")


@dataclass
class MetricsConfig:
    reference: Path
    estimate: Path
    ratio: int = 1
    per_band: bool = True


@dataclass
class SpectrumConfig:
    input: Path


@dataclass
class SmoothnessConfig:
    input: Path
    threshold: float | None = None


@dataclass
class SweepConfig:
    fuse: FuseConfig
    # axis -> values; axes are lam, eta, L (= M) and N
    grid: dict
    n_jobs: int = 1

    def __post_init__(self):
        unknown = sorted(set(self.grid) - {"lam", "eta", "L", "N"})
        if unknown:
            raise ConfigError(INVALID_CONFIG, f"grid: unknown axes {unknown}")
        if not self.grid or any(not isinstance(v, list) or not v for v in self.grid.values()):
            raise ConfigError(INVALID_CONFIG, "grid axes need nonempty value lists")
        ranked = sorted({"L", "N"} & set(self.grid))
        if ranked and self.fuse.init == "truth":
            # a truth start carries its own ranks
            raise ConfigError(INVALID_CONFIG, f"grid axes {ranked} need init 'standard', the truth start fixes the ranks")


COMMANDS = {
    "simulate": SimulateConfig,
    "fuse": FuseConfig,
    "fit": FitConfig,
    "metrics": MetricsConfig,
    "spectrum": SpectrumConfig,
    "smoothness": SmoothnessConfig,
    "sweep": SweepConfig,
}

# JSON key -> field name
ALIASES = {RegConfig: {"lambda": "lam"}}
NESTED = {
    "synthetic": SyntheticSpec,
    "solver": SolverConfig,
    "reg": RegConfig,
    "fuse": FuseConfig,
}
PATH_FIELDS = {"input", "hsi", "msi", "degradation", "truth", "reference", "estimate"}


def build(cls, doc: dict, base_dir: Path, where: str = ""):
    """Typed config from a JSON object; paths are resolved against base_dir and must exist."""
    where = where or cls.__name__
    if not isinstance(doc, dict):
        raise ConfigError(INVALID_CONFIG, f"{where}: expected an object, got {type(doc).__name__}")
    doc = {ALIASES.get(cls, {}).get(k, k): v for k, v in doc.items()}
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(doc) - set(known))
    if unknown:
        raise ConfigError(INVALID_CONFIG, f"{where}: unknown keys {unknown}")
    missing = sorted(
        name for name, f in known.items() if f.default is MISSING and f.default_factory is MISSING and name not in doc
    )
    if missing:
        raise ConfigError(INVALID_CONFIG, f"{where}: missing keys {missing}")
    kwargs = {}
    for key, value in doc.items():
        if key in NESTED and value is not None:
            value = build(NESTED[key], value, base_dir, f"{where}.{key}")
        elif key in PATH_FIELDS and value is not None:
            value = _resolve(base_dir, value, f"{where}.{key}")
        elif key == "preset" and isinstance(value, str) and value.endswith(".json"):
            value = str(_resolve(base_dir, value, f"{where}.{key}"))
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except TensorError as e:
        raise ConfigError(INVALID_CONFIG, f"{where}: {e}") from e
    except (TypeError, ValueError) as e:
        raise ConfigError(INVALID_CONFIG, f"{where}: {e}") from e


def _resolve(base_dir: Path, value, where: str) -> Path:
    path = Path(value)
    if not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise ConfigError(INVALID_CONFIG, f"{where}: path not found: {path}")
    return path


def load_config(command: str, path):
    if command not in COMMANDS:
        raise ConfigError(INVALID_CONFIG, f"unknown command {command!r}")
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise ConfigError(INVALID_CONFIG, f"cannot read config {path}: {e}") from e
    except ValueError as e:
        raise ConfigError(INVALID_CONFIG, f"{path}: {e}") from e
    config = build(COMMANDS[command], doc, path.parent.resolve(), command)
    log.debug(f"{command} config: {dataclass_non_defaults(config)}")
    return config
