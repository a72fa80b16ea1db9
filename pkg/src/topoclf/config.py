"""Run configuration with a reproducible INI round-trip.

Defaults are the standard operating point of the pipeline: 248 x 248 inputs,
100 Betti bins over 0..255 (200-wide feature vectors), a 90:10 split at seed
3 with a 10% validation carve-out of the training part, MLP widths
800-256-128 into 4 classes, fusion head 256-128 with dropout 0.2 over a
64-wide external embedding, Adam at 0.001, batch 32, 50 epochs. Every CLI
artifact embeds the resolved configuration for provenance.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .betti import BinSpec
from .pipeline import SplitConfig, TrainConfig

__all__ = ["RunConfig", "ConfigError", "load_config"]


class ConfigError(ValueError):
    """Malformed configuration file or unknown key."""


@dataclass
class RunConfig:
    dataset_root: str = "dataset"
    image_side: int = 248
    n_classes: int = 4
    class_names: tuple[str, ...] | None = None
    bin_count: int = 100
    intensity_lo: float = 0.0
    intensity_hi: float = 255.0
    test_fraction: float = 0.10
    validation_fraction: float = 0.10
    split_seed: int = 3
    tda_hidden: tuple[int, ...] = (800, 256, 128)
    fusion_hidden: tuple[int, ...] = (256, 128)
    embedding_dim: int = 64
    dropout: float = 0.2
    batch_size: int = 32
    epochs: int = 50
    learning_rate: float = 0.001
    train_seed: int = 3
    synth_per_class: int = 200
    synth_side: int = 64
    synth_seed: int = 7
    synth_noise: int = 12

    @property
    def input_dim(self) -> int:
        return 2 * self.bin_count

    def bin_spec(self) -> BinSpec:
        return BinSpec(count=self.bin_count, lo=self.intensity_lo, hi=self.intensity_hi)

    def split_config(self) -> SplitConfig:
        return SplitConfig(
            test_fraction=self.test_fraction,
            validation_fraction_of_train=self.validation_fraction,
            seed=self.split_seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.train_seed,
        )

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out


# section -> ini key -> (attribute, parser)
_SCHEMA: dict[str, dict[str, tuple[str, str]]] = {
    "data": {
        "dataset_root": ("dataset_root", "str"),
        "image_side": ("image_side", "int"),
        "n_classes": ("n_classes", "int"),
        "class_names": ("class_names", "names"),
    },
    "features": {
        "bin_count": ("bin_count", "int"),
        "intensity_lo": ("intensity_lo", "float"),
        "intensity_hi": ("intensity_hi", "float"),
    },
    "split": {
        "test_fraction": ("test_fraction", "float"),
        "validation_fraction": ("validation_fraction", "float"),
        "seed": ("split_seed", "int"),
    },
    "model": {
        "tda_hidden": ("tda_hidden", "ints"),
        "fusion_hidden": ("fusion_hidden", "ints"),
        "embedding_dim": ("embedding_dim", "int"),
        "dropout": ("dropout", "float"),
    },
    "training": {
        "batch_size": ("batch_size", "int"),
        "epochs": ("epochs", "int"),
        "learning_rate": ("learning_rate", "float"),
        "seed": ("train_seed", "int"),
    },
    "synth": {
        "per_class": ("synth_per_class", "int"),
        "side": ("synth_side", "int"),
        "seed": ("synth_seed", "int"),
        "noise": ("synth_noise", "int"),
    },
}


def load_config(path) -> RunConfig:
    """Parse a flat ``key = value`` INI file with one section per stage."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(path.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = RunConfig()
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            attr, kind = _SCHEMA[section][key]
            setattr(cfg, attr, _parse_value(raw, kind, f"{path} [{section}] {key}"))
    return cfg


def _parse_value(raw: str, kind: str, where: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "ints":
            return tuple(int(v.strip()) for v in raw.split(",") if v.strip())
        if kind == "names":
            names = tuple(v.strip() for v in raw.split(",") if v.strip())
            return names or None
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from exc
