"""Pipeline configuration: one JSON file, dotted-key overrides, stable hashing.

Precedence is override > file > built-in default.  The default preset is
the desk-scale pipeline (toy branch sizes, 625 synthetic images); the
full-scale branch sizes remain available by setting
``ensemble.branch_sizes`` to [512, 384, 256].
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .augment import AugmentConfig
from .ensemble import ArchConfig, EnsembleSpec, TOY_BRANCH_SIZES
from .synth import SynthConfig
from .train import TrainConfig

CUTOFF_SETS = ("validation", "test")


@dataclass
class PipelineConfig:
    seed: int = 0
    outdir: str = "runs/demo"
    manifest: str | None = None  # dataset manifest; defaults to the synth stage output
    cutoff_set: str = "validation"
    synth: SynthConfig = field(default_factory=lambda: SynthConfig(n_negative=313, n_positive=312))
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    ensemble: EnsembleSpec = field(
        default_factory=lambda: EnsembleSpec(branch_sizes=TOY_BRANCH_SIZES)
    )

    def __post_init__(self):
        if self.cutoff_set not in CUTOFF_SETS:
            raise ValueError(f"cutoff_set must be one of {CUTOFF_SETS}, got {self.cutoff_set!r}")


def to_dict(cfg: PipelineConfig) -> dict:
    return {
        "seed": cfg.seed,
        "outdir": cfg.outdir,
        "manifest": cfg.manifest,
        "cutoff_set": cfg.cutoff_set,
        "synth": {
            "n_negative": cfg.synth.n_negative,
            "n_positive": cfg.synth.n_positive,
            "image_size": cfg.synth.image_size,
            "blob_radius_range": list(cfg.synth.blob_radius_range),
            "blob_contrast": cfg.synth.blob_contrast,
            "noise_sigma": cfg.synth.noise_sigma,
            "texture_scales": list(cfg.synth.texture_scales),
        },
        "augment": {
            "rescale_min": cfg.augment.rescale_min,
            "rescale_max": cfg.augment.rescale_max,
            "max_crop_frac": cfg.augment.max_crop_frac,
            "flip_prob": cfg.augment.flip_prob,
            "shift_frac": cfg.augment.shift_frac,
        },
        "train": {
            "lr0": cfg.train.lr0,
            "decay": cfg.train.decay,
            "rho": cfg.train.rho,
            "epsilon": cfg.train.epsilon,
            "batch_size": cfg.train.batch_size,
            "patience": cfg.train.patience,
            "max_epochs": cfg.train.max_epochs,
            "phase1_epochs": cfg.train.phase1_epochs,
            "decay_per_epoch": cfg.train.decay_per_epoch,
        },
        "ensemble": {
            "branch_sizes": list(cfg.ensemble.branch_sizes),
            "arch": {
                "stem_channels": cfg.ensemble.arch.stem_channels,
                "stage_channels": list(cfg.ensemble.arch.stage_channels),
                "dropout_rate": cfg.ensemble.arch.dropout_rate,
            },
        },
    }


def from_dict(data: dict) -> PipelineConfig:
    ens = data["ensemble"]
    return PipelineConfig(
        seed=int(data["seed"]),
        outdir=data["outdir"],
        manifest=data["manifest"],
        cutoff_set=data["cutoff_set"],
        synth=SynthConfig(**data["synth"]),
        augment=AugmentConfig(**data["augment"]),
        train=TrainConfig(**data["train"]),
        ensemble=EnsembleSpec(branch_sizes=tuple(ens["branch_sizes"]),
                              arch=ArchConfig(**ens["arch"])),
    )


def _merge(base: dict, incoming: dict, path: str = "") -> None:
    for key, value in incoming.items():
        if key not in base:
            raise KeyError(f"unknown configuration key {path + key!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            _merge(base[key], value, path + key + ".")
        else:
            base[key] = value


def apply_overrides(data: dict, overrides) -> None:
    """Each override is `dotted.key=value`; values parse as JSON, else string."""
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"override {item!r} is not of the form key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise KeyError(f"unknown configuration key {key!r}")
            node = node[part]
        if parts[-1] not in node:
            raise KeyError(f"unknown configuration key {key!r}")
        node[parts[-1]] = value


def load_config(path=None, overrides=None):
    """Returns (PipelineConfig, canonical dict) after default<-file<-override merging."""
    data = to_dict(PipelineConfig())
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            _merge(data, json.load(f))
    apply_overrides(data, overrides)
    return from_dict(data), data


def config_hash(data: dict) -> str:
    blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()
