"""INI-style configuration with strict key checking.

Four sections map onto the dataclasses used across the package::

    [data]       generation: categories, count, frames, points, noise, camera
    [featurize]  keypoints / neighborhood parameters
    [model]      network widths and query count
    [train]      optimization schedule, seed, ablations

Unknown sections or keys are rejected by name; command-line flags override
individual values after the file is applied.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from .errors import DomainError
from .featurize import FeaturizeConfig
from .model import ModelConfig
from .scenegen import CATEGORIES
from .train import TrainConfig


@dataclass
class DataConfig:
    root: str = "dataset"
    categories: tuple = ("laptop", "drawer_unit")
    count: int = 16          # total sequences, cycled over categories
    frames: int = 8
    n_points: int = 512
    seed: int = 0
    noisy: bool = True
    sigma_points: float = 0.005
    sigma_flow: float = 0.002
    arc_lo: float = 20.0
    arc_hi: float = 90.0
    resolution: int = 256
    split_seed: int = 0
    ratios: tuple = (0.70, 0.15, 0.15)

    def __post_init__(self):
        for c in self.categories:
            if c not in CATEGORIES:
                raise DomainError(f"unknown category {c!r}; "
                                  f"choose from {', '.join(CATEGORIES)}")


@dataclass
class ConfigBundle:
    data: DataConfig = field(default_factory=DataConfig)
    featurize: FeaturizeConfig = field(default_factory=FeaturizeConfig)
    model: ModelConfig = field(default_factory=ModelConfig.small)
    train: TrainConfig = field(default_factory=TrainConfig)


_SECTIONS = {"data": DataConfig, "featurize": FeaturizeConfig,
             "model": ModelConfig, "train": TrainConfig}


def _parse_value(text: str, pytype):
    if pytype is bool:
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise DomainError(f"expected a boolean, got {text!r}")
    if pytype is int:
        return int(text)
    if pytype is float:
        return float(text)
    if pytype is tuple:
        items = [s.strip() for s in text.split(",") if s.strip()]
        conv = []
        for s in items:
            try:
                conv.append(int(s))
            except ValueError:
                try:
                    conv.append(float(s))
                except ValueError:
                    conv.append(s)
        return tuple(conv)
    return text


def load_config(path: str | None) -> ConfigBundle:
    """Defaults, optionally updated from an INI file (strict keys)."""
    bundle = ConfigBundle()
    if path is None:
        return bundle
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise DomainError(f"config file {path} not found")
    for section in parser.sections():
        if section not in _SECTIONS:
            raise DomainError(f"unknown config section [{section}]; "
                              f"valid: {sorted(_SECTIONS)}")
        target = getattr(bundle, section)
        fields = {f.name: f for f in dataclasses.fields(target)}
        updates = {}
        for key, text in parser.items(section):
            if key not in fields:
                raise DomainError(f"unknown config key {key!r} in [{section}]; "
                                  f"valid: {sorted(fields)}")
            current = getattr(target, key)
            pytype = type(current) if current is not None else str
            updates[key] = _parse_value(text, pytype)
        # replace() re-runs the dataclass validation
        setattr(bundle, section, dataclasses.replace(target, **updates))
    return bundle


def default_config_ini() -> str:
    """Documented INI with every default value, for --dump-config."""
    bundle = ConfigBundle()
    lines = []
    for section, _ in _SECTIONS.items():
        lines.append(f"[{section}]")
        for f in dataclasses.fields(getattr(bundle, section)):
            v = getattr(getattr(bundle, section), f.name)
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        lines.append("")
    return "\n".join(lines)
