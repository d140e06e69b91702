"""Pipeline configuration: JSON file sections plus command-line overrides."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .bilstm import TrainConfig
from .dataio import DEFAULT_DATE_FORMAT
from .errors import ConfigError
from .gbdt import GbdtConfig

FUSION_MODES = ("reciprocal", "stacking")
SPLITS = ("train", "val", "test", "dataset2")

# config-file spellings that differ from attribute names
_GBDT_ALIASES = {"lambda": "reg_lambda"}


@dataclass
class PipelineConfig:
    dataset1: str | None = None
    dataset2: str | None = None
    date_format: str = DEFAULT_DATE_FORMAT
    train_fraction: float = 0.8
    validation_fraction: float = 0.1
    fusion: str = "stacking"
    stacking_fit_split: str = "test"
    seed: int = 42
    output_dir: str = "cabxde-out"
    bilstm: TrainConfig = field(default_factory=TrainConfig)
    gbdt: GbdtConfig = field(default_factory=GbdtConfig)

    def __post_init__(self):
        self.apply_seed(self.seed)

    def apply_seed(self, seed: int):
        self.seed = int(seed)
        self.bilstm.seed = self.seed
        self.gbdt.seed = self.seed

    def validate(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError(f"validation_fraction must lie in (0, 1), got {self.validation_fraction}")
        if self.fusion not in FUSION_MODES:
            raise ConfigError(f"fusion must be one of {FUSION_MODES}, got {self.fusion!r}")
        if self.stacking_fit_split not in ("val", "test"):
            raise ConfigError("stacking_fit_split must be 'val' or 'test'")
        self.bilstm.validate()
        self.gbdt.validate()
        return self

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    def to_dict(self) -> dict:
        gbdt = asdict(self.gbdt)
        gbdt["lambda"] = gbdt.pop("reg_lambda")
        gbdt.pop("seed")
        bil = asdict(self.bilstm)
        bil.pop("seed")
        return {
            "data": {
                "dataset1": self.dataset1,
                "dataset2": self.dataset2,
                "date_format": self.date_format,
                "train_fraction": self.train_fraction,
                "validation_fraction": self.validation_fraction,
            },
            "bilstm": bil,
            "gbdt": gbdt,
            "ensemble": {"fusion": self.fusion, "stacking_fit_split": self.stacking_fit_split},
            "seed": self.seed,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "PipelineConfig":
        known = {"data", "bilstm", "gbdt", "ensemble", "seed", "output_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        data = dict(d.get("data", {}))
        ens = dict(d.get("ensemble", {}))
        bil = _section(TrainConfig, d.get("bilstm", {}), {})
        gb = _section(GbdtConfig, d.get("gbdt", {}), _GBDT_ALIASES)
        for key in ("dataset1", "dataset2"):
            if data.get(key) and base_dir is not None and not Path(data[key]).is_absolute():
                data[key] = str(base_dir / data[key])
        out = d.get("output_dir", "cabxde-out")
        if base_dir is not None and not Path(out).is_absolute():
            out = str(base_dir / out)
        try:
            cfg = cls(
                dataset1=data.pop("dataset1", None),
                dataset2=data.pop("dataset2", None),
                date_format=data.pop("date_format", DEFAULT_DATE_FORMAT),
                train_fraction=float(data.pop("train_fraction", 0.8)),
                validation_fraction=float(data.pop("validation_fraction", 0.1)),
                fusion=ens.pop("fusion", "stacking"),
                stacking_fit_split=ens.pop("stacking_fit_split", "test"),
                seed=int(d.get("seed", 42)),
                output_dir=out,
                bilstm=bil,
                gbdt=gb,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config value: {exc}") from None
        if data or ens:
            raise ConfigError(f"unknown config keys: {sorted(data) + sorted(ens)}")
        return cfg


def _section(cls, values: dict, aliases: dict):
    names = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in values.items():
        attr = aliases.get(key, key)
        if attr not in names or attr == "seed":
            raise ConfigError(f"unknown {cls.__name__} field {key!r}")
        kwargs[attr] = type(getattr(cls(), attr))(value)
    return cls(**kwargs)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return PipelineConfig.from_dict(raw, base_dir=path.parent)
