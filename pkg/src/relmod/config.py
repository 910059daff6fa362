"""One JSON document configuring data, model, losses and training."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

from .backbone import BackboneConfig
from .dataset import GenConfig
from .losses import MarginConfig
from .relation import RelationConfig

CONFIG_VERSION = 1
LOSS_MODES = ("softmax_only", "softmax_plus_plain_triplet", "softmax_plus_conditional")
ARCHS = ("relation", "baseline")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    arch: str = "relation"
    epochs: int = 20
    batch_identities: int = 8
    batch_per_domain: int = 4
    steps_per_epoch: Optional[int] = None
    lr_start: float = 1e-3
    lr_end: float = 1e-5
    optimizer: str = "sgd_momentum"
    momentum: float = 0.9
    dropout_p: float = 0.5
    loss_mode: str = "softmax_plus_conditional"
    hardest_positive: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 < self.lr_end <= self.lr_start:
            raise ValueError("need 0 < lr_end <= lr_start")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}")
        if self.arch not in ARCHS:
            raise ValueError(f"arch must be one of {ARCHS}")
        if self.optimizer not in ("sgd_momentum", "adam"):
            raise ValueError("optimizer must be sgd_momentum or adam")
        if self.batch_identities < 2 or self.batch_per_domain < 1:
            raise ValueError("batches need >= 2 identities and >= 1 sample per domain")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")

    @property
    def batch_size(self) -> int:
        return self.batch_identities * self.batch_per_domain * 2

    def lr_at(self, epoch: int) -> float:
        """Geometric decay from lr_start (first epoch) to lr_end (last epoch)."""
        if self.epochs == 1:
            return self.lr_start
        return self.lr_start * (self.lr_end / self.lr_start) ** (epoch / (self.epochs - 1))


SECTIONS = {
    "data": GenConfig,
    "backbone": BackboneConfig,
    "relation": RelationConfig,
    "loss": MarginConfig,
    "train": TrainConfig,
}


@dataclass(frozen=True)
class RunConfig:
    data: GenConfig = field(default_factory=GenConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    relation: RelationConfig = field(default_factory=RelationConfig)
    loss: MarginConfig = field(default_factory=MarginConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    version: int = CONFIG_VERSION

    def __post_init__(self):
        b, r = self.backbone, self.relation
        if (b.output_grid, b.output_channels) != (r.N, r.C):
            raise ValueError(f"backbone emits {b.output_grid}x{b.output_grid}x{b.output_channels} "
                             f"but relation expects {r.N}x{r.N}x{r.C}")
        if b.input_size != self.data.image_size:
            raise ValueError(f"backbone input_size {b.input_size} != image_size {self.data.image_size}")

    def to_dict(self) -> dict:
        out = {"version": self.version}
        for name in SECTIONS:
            d = dataclasses.asdict(getattr(self, name))
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
        return out

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def replace(self, **sections) -> "RunConfig":
        """Return a copy with per-section field overrides, e.g.
        ``cfg.replace(train={"epochs": 3})``."""
        d = self.to_dict()
        for name, fields in sections.items():
            d[name].update(fields)
        return from_dict(d)


def from_dict(doc: dict) -> RunConfig:
    """Validate and fill defaults; unknown keys are rejected."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - set(SECTIONS) - {"version"}
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    version = doc.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r}")
    kwargs = {}
    for name, cls in SECTIONS.items():
        section = doc.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"section {name!r} must be an object")
        allowed = {f.name for f in dataclasses.fields(cls)}
        bad = set(section) - allowed
        if bad:
            raise ConfigError(f"unknown key(s) in {name!r}: {sorted(bad)}")
        try:
            kwargs[name] = cls(**section)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid {name!r} section: {exc}") from None
    try:
        return RunConfig(version=version, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def loads(text: str) -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return from_dict(doc)


def load(path) -> RunConfig:
    with open(path) as fh:
        return loads(fh.read())
