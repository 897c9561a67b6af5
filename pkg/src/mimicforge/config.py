"""Run configuration: one TOML file covering every stage, with a stable
content hash embedded in all artifacts for provenance."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field

from .augment import AugmentConfig
from .diffcore.train import TrainConfig
from .masker import MaskPolicy
from .sampler import SelectionBand

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class RunConfig:
    resolution: int = 64  # canonical working size; 512 matches the full-scale preset
    seed: int = 0
    video_fraction: float = 0.7
    max_pairs_per_video: int = 8
    sift_ratio: float = 0.8
    sift_contrast_threshold: float = 0.03
    sift_edge_ratio: float = 10.0
    band: SelectionBand = field(default_factory=SelectionBand)
    augment: AugmentConfig = field(default_factory=AugmentConfig.strong)
    mask_policy: MaskPolicy = field(default_factory=MaskPolicy)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.resolution % 8:
            raise ValueError("resolution must be divisible by 8")
        if not 0.0 <= self.video_fraction <= 1.0:
            raise ValueError("video_fraction must be in [0,1]")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """SHA-256 of the canonical (key-sorted) JSON rendering."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def replace(self, **kwargs) -> "RunConfig":
        return dataclasses.replace(self, **kwargs)


def _tupleize(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Config file plus flag overrides; flags win."""
    data: dict = {}
    if path is not None:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    top = {k: v for k, v in data.items() if not isinstance(v, dict)}
    cfg = RunConfig(
        **top,
        band=SelectionBand(**data.get("band", {})),
        augment=AugmentConfig(**_tupleize(data.get("augment", {})))
        if "augment" in data
        else AugmentConfig.strong(),
        mask_policy=MaskPolicy(**data.get("mask_policy", {})),
        train=TrainConfig(**_tupleize(data.get("train", {}))),
    )
    if overrides:
        train_over = {k: v for k, v in overrides.items() if k in {f.name for f in dataclasses.fields(TrainConfig)}}
        top_over = {k: v for k, v in overrides.items() if k in {f.name for f in dataclasses.fields(RunConfig)}}
        if train_over:
            cfg = cfg.replace(train=dataclasses.replace(cfg.train, **train_over))
        if top_over:
            cfg = cfg.replace(**top_over)
    return cfg


def stable_seed(root_seed: int, *tags) -> int:
    """Deterministic per-entity sub-seed derived from the run seed."""
    payload = json.dumps([root_seed, *map(str, tags)]).encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little") % (2**63)
