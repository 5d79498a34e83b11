"""Experiment configuration: defaults, TOML loading with dotted keys, fingerprinting."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .channel import DEFAULT_DELAYS, DEFAULT_PDP_DB, FrameGeometry
from .estimation import SearchGrid
from .framing import RatioConfig
from .transforms import ChirpParams

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

TOOL_VERSION = "0.1.0"

ALL_SCHEMES = ("tf-interp", "af-interp", "tf-lstm", "af-lstm", "perfect")
LSTM_SCHEMES = ("tf-lstm", "af-lstm")


class ConfigError(ValueError):
    """Inconsistent or unreadable experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    # geometry
    n_subcarriers: int = 64
    cp_len: int = 16
    subcarrier_spacing: float = 30e3
    carrier_freq: float = 2e9
    n_symbols: int = 12
    # channel
    pdp_db: tuple[float, ...] = DEFAULT_PDP_DB
    delays: tuple[int, ...] = DEFAULT_DELAYS
    nu_max: float = 0.1
    # slot layout
    pilot_count: int = 4
    data_count: int = 8
    # chirps
    alpha_max: int = 0
    k_v: int = 1
    c2: float = 0.0
    # experiment
    schemes: tuple[str, ...] = ALL_SCHEMES
    snr_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    slots: int = 1000
    seed: int = 0
    # estimator
    search_l_max: int = 3
    search_nu_max: float = 0.25
    search_step: float = 0.025
    max_paths: int = 6
    stop_threshold: float = 1e-3
    # predictor models; "{pilot_count}" / "{data_count}" are substituted
    af_model: str = ""
    tf_model: str = ""
    # predictor training
    train_snr_db: tuple[float, ...] = (30.0,)
    train_examples: int = 20000
    train_epochs: int = 100
    train_hidden: int = 128
    train_layers: int = 2
    train_lr: float = 1e-3
    train_lr_decay: float = 0.98
    train_batch: int = 64
    clean_targets: bool = True

    def __post_init__(self):
        self.validate()

    @property
    def geometry(self) -> FrameGeometry:
        return FrameGeometry(
            self.n_subcarriers, self.cp_len, self.subcarrier_spacing, self.carrier_freq, self.n_symbols
        )

    @property
    def ratio(self) -> RatioConfig:
        return RatioConfig(self.pilot_count, self.data_count)

    @property
    def chirps(self) -> ChirpParams:
        return ChirpParams.from_rule(self.alpha_max, self.k_v, self.n_subcarriers, self.c2)

    @property
    def grid(self) -> SearchGrid:
        return SearchGrid(self.search_l_max, self.search_nu_max, self.search_step)

    @property
    def n_paths(self) -> int:
        return len(self.pdp_db)

    def validate(self):
        if self.pilot_count + self.data_count != self.n_symbols:
            raise ConfigError(
                f"pilot_count + data_count = {self.pilot_count + self.data_count} != n_symbols = {self.n_symbols}"
            )
        if self.pilot_count < 1:
            raise ConfigError("at least one pilot symbol is required")
        if len(self.pdp_db) != len(self.delays):
            raise ConfigError("pdp_db and delays must have equal length")
        if self.delays and max(self.delays) > self.cp_len:
            raise ConfigError("a tap delay exceeds the CP length")
        if self.n_subcarriers % 2:
            raise ConfigError("n_subcarriers must be even")
        if not 0 <= self.nu_max <= 0.5:
            raise ConfigError("nu_max must lie in [0, 0.5]")
        unknown = set(self.schemes) - set(ALL_SCHEMES)
        if unknown:
            raise ConfigError(f"unknown schemes {sorted(unknown)}")
        if self.slots < 0:
            raise ConfigError("slots must be non-negative")

    def model_path(self, scheme: str) -> str:
        template = self.af_model if scheme == "af-lstm" else self.tf_model
        return template.format(pilot_count=self.pilot_count, data_count=self.data_count)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def fingerprint(self) -> str:
        """Hash of the canonical JSON form; insensitive to key order in the source file."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def with_ratio(self, ratio: RatioConfig) -> "ExperimentConfig":
        return replace(self, pilot_count=ratio.pilot_count, data_count=ratio.data_count)


# dotted-section keys accepted in config files
_SECTIONS = {
    "geometry": ("n_subcarriers", "cp_len", "subcarrier_spacing", "carrier_freq", "n_symbols"),
    "channel": ("pdp_db", "delays", "nu_max"),
    "ratio": ("pilot_count", "data_count"),
    "chirps": ("alpha_max", "k_v", "c2"),
    "experiment": ("schemes", "snr_db", "slots", "seed"),
    "estimator": ("search_l_max", "search_nu_max", "search_step", "max_paths", "stop_threshold"),
    "model": ("af_model", "tf_model"),
    "training": (
        "train_snr_db", "train_examples", "train_epochs", "train_hidden", "train_layers",
        "train_lr", "train_lr_decay", "train_batch", "clean_targets",
    ),
}


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def config_from_mapping(mapping: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    allowed = {f"{sec}.{name}": name for sec, names in _SECTIONS.items() for name in names}
    updates = {}
    for key, value in _flatten(mapping).items():
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r}")
        name = allowed[key]
        default = getattr(base, name)
        try:
            if isinstance(default, tuple):
                value = tuple(value) if isinstance(value, (list, tuple)) else (value,)
                if name in ("delays",):
                    value = tuple(int(v) for v in value)
                elif name in ("schemes",):
                    value = tuple(str(v) for v in value)
                else:
                    value = tuple(float(v) for v in value)
            elif isinstance(default, bool):
                value = bool(value)
            elif isinstance(default, int):
                value = int(value)
            elif isinstance(default, float):
                value = float(value)
            else:
                value = str(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from exc
        updates[name] = value
    try:
        return replace(base, **updates)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        mapping = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return config_from_mapping(mapping)


def dump_config(cfg: ExperimentConfig) -> str:
    """Config file text with every key, grouped by dotted section."""
    lines = []
    for sec, names in _SECTIONS.items():
        for name in names:
            lines.append(f"{sec}.{name} = {json.dumps(_toml_value(getattr(cfg, name)))}")
    return "\n".join(lines) + "\n"


def _toml_value(v):
    return list(v) if isinstance(v, tuple) else v
