"""Plain-text run configuration (``key = value`` per line, ``#`` comments)."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .geograph import DEFAULT_K, DEFAULT_RADIUS_KM, OBSERVATION_KINDS, NodeKind
from .neuralcore.model import ModelConfig
from .synthdata import DEFAULT_NOISE_SD, DEFAULT_OBS_COUNT, FieldSpec


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 11
    # ~2 500 NWP nodes at 0.45 degree spacing (45 x 56)
    lat_min: float = 30.0
    lat_max: float = 50.0
    lon_min: float = 115.0
    lon_max: float = 140.0
    grid_spacing: float = 0.45
    n_bumps: int = 16
    advection_speed: float = 0.8
    width_min: float = 1.5
    width_max: float = 3.0
    noise_scale: float = 0.2
    obs_count: int = DEFAULT_OBS_COUNT
    obs_counts: dict = field(default_factory=dict)  # per-kind overrides, key obs_count.<KIND>
    train_steps: int = 40
    test_steps: int = 40
    radius_km: float = DEFAULT_RADIUS_KM
    k: int = DEFAULT_K
    d: int = 32
    n_gcn_layers: int = 2
    mlp_hidden: tuple = (32,)
    psi: float = 1e-4
    lr: float = 3e-4
    epochs_pretrain: int = 10
    epochs_finetune: int = 1
    batch_size: int = 64
    mask_rate: float = 0.0
    method: str = "lrp"
    fractions: tuple = (0.1, 0.2)
    out: str = "run"
    dataset_dir: str = ""
    report_dir: str = ""

    def __post_init__(self):
        if self.train_steps < 1 or self.test_steps < 1:
            raise ConfigError("train_steps and test_steps must be >= 1")
        if not all(0 < f < 1 for f in self.fractions):
            raise ConfigError("fractions must lie in (0, 1)")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be >= 0")

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def data_dir(self) -> Path:
        return Path(self.dataset_dir) if self.dataset_dir else self.out_dir

    @property
    def reports(self) -> Path:
        return Path(self.report_dir) if self.report_dir else self.out_dir

    def field_spec(self) -> FieldSpec:
        try:
            return FieldSpec(
                seed=self.seed,
                region=(self.lat_min, self.lat_max, self.lon_min, self.lon_max),
                n_bumps=self.n_bumps,
                advection_speed=self.advection_speed,
                noise_sd={k: v * self.noise_scale for k, v in DEFAULT_NOISE_SD.items()},
                grid_spacing=self.grid_spacing,
                width_range=(self.width_min, self.width_max),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def counts(self) -> dict:
        out = {k: self.obs_count for k in OBSERVATION_KINDS}
        out.update(self.obs_counts)
        return out

    def model_config(self) -> ModelConfig:
        try:
            return ModelConfig(
                d=self.d,
                n_gcn_layers=self.n_gcn_layers,
                mlp_hidden=self.mlp_hidden,
                k=self.k,
                psi=self.psi,
                lr=self.lr,
                epochs_pretrain=self.epochs_pretrain,
                epochs_finetune=self.epochs_finetune,
                batch_size=self.batch_size,
                mask_rate=self.mask_rate,
                seed=self.seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def train_times(self):
        return range(1, self.train_steps + 1)

    @property
    def test_times(self):
        return range(self.train_steps + 1, self.train_steps + self.test_steps + 1)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name, raw: str):
    default = _FIELDS[name].default
    if default is dataclasses.MISSING:
        default = _FIELDS[name].default_factory()
    try:
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = [p for p in raw.replace(" ", "").split(",") if p]
            return tuple(type(default[0])(p) for p in parts) if default else tuple(parts)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw


def from_mapping(values: dict, base: RunConfig = None) -> RunConfig:
    """Build a config from string values; unknown keys are rejected."""
    changes, counts = {}, dict(base.obs_counts) if base else {}
    for key, raw in values.items():
        key = key.strip()
        raw = str(raw).strip()
        if key.startswith("obs_count."):
            try:
                kind = NodeKind.parse(key.split(".", 1)[1])
                counts[kind] = int(raw)
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
            if not kind.is_observation or counts[kind] < 0:
                raise ConfigError(f"{key}: must be a non-negative count of an observation kind")
            continue
        if key not in _FIELDS or key == "obs_counts":
            raise ConfigError(f"unknown config key {key!r}")
        changes[key] = _coerce(key, raw)
    changes["obs_counts"] = counts
    try:
        return dataclasses.replace(base or RunConfig(), **changes)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def load_config(path, base: RunConfig = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return from_mapping(parse_config_text(text), base)
