"""Multi-size ensemble: train one CNN per input size, average their softmax.

Every branch shares the same layer template and differs only in input
size, so small-image branches see coarser versions of the same scene.
The ensemble score is the arithmetic mean of the branch probability
vectors; the positive-class component of that mean is thresholded by the
chosen cutoff.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import augment as aug
from .imgio import GrayImage
from .nn.model import (
    Conv2D,
    Dense,
    Dropout,
    GlobalAvgPool,
    ModelParams,
    ModelSpec,
    ReLU,
    ResidualBlock,
    Softmax,
    forward_batch,
    init_params,
)
from .nn.weights import load_weights, save_weights
from .rng import make_rng
from .train import History, TrainConfig, fit, prepare_input

DEFAULT_BRANCH_SIZES = (512, 384, 256)
TOY_BRANCH_SIZES = (64, 48, 32)

BUNDLE_MANIFEST = "bundle.json"


@dataclass(frozen=True)
class ArchConfig:
    """Layer template shared by all branches (input size is the free knob)."""

    stem_channels: int = 8
    stage_channels: tuple = (8, 16, 32)
    dropout_rate: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "stage_channels", tuple(self.stage_channels))
        if self.stem_channels < 1 or min(self.stage_channels, default=0) < 1:
            raise ValueError("channel counts must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


def build_model_spec(size: int, arch: ArchConfig = ArchConfig()) -> ModelSpec:
    """Stem conv, one stride-2 residual block per stage, pooled softmax head."""
    layers = [Conv2D(arch.stem_channels, stride=1), ReLU()]
    for channels in arch.stage_channels:
        layers += [ResidualBlock(channels, stride=2), ReLU()]
    layers += [GlobalAvgPool(), Dropout(arch.dropout_rate), Dense(2), Softmax()]
    return ModelSpec(input_size=(1, size, size), layers=tuple(layers))


@dataclass(frozen=True)
class EnsembleSpec:
    branch_sizes: tuple = DEFAULT_BRANCH_SIZES
    arch: ArchConfig = field(default_factory=ArchConfig)

    def __post_init__(self):
        object.__setattr__(self, "branch_sizes", tuple(int(s) for s in self.branch_sizes))
        if not self.branch_sizes:
            raise ValueError("need at least one branch")
        if any(a <= b for a, b in zip(self.branch_sizes, self.branch_sizes[1:])):
            raise ValueError("branch sizes must be strictly decreasing")


@dataclass
class Branch:
    size: int
    spec: ModelSpec
    params: ModelParams
    history: History | None = None


@dataclass
class EnsembleModel:
    espec: EnsembleSpec
    branches: list
    seed: int
    cutoff: float | None = None
    metrics: dict | None = None


@dataclass
class Prediction:
    per_branch: list
    averaged: np.ndarray
    score: float


def train_ensemble(split, espec: EnsembleSpec, tconfig: TrainConfig,
                   aconfig: aug.AugmentConfig, seed: int, loader=None,
                   parallel: bool = False, log=None, checkpoint_dir=None) -> EnsembleModel:
    """Train every branch independently; branch b's rng streams derive from
    (seed, "init"/"fit", b), so results do not depend on execution order."""

    def train_branch(b: int):
        size = espec.branch_sizes[b]
        spec = build_model_spec(size, espec.arch)
        params0 = init_params(spec, make_rng(seed, "init", b))
        branch_log = None
        if log is not None:
            branch_log = lambda line: log(f"branch {size}: {line}")
        ckpt = None
        if checkpoint_dir is not None:
            ckpt = os.path.join(checkpoint_dir, f"branch_{size:04d}.ckpt")
        try:
            params, history = fit(spec, params0, split, tconfig, aconfig,
                                  make_rng(seed, "fit", b), loader=loader,
                                  checkpoint_path=ckpt, log=branch_log)
        except Exception as exc:
            raise RuntimeError(f"branch {b} (size {size}) failed: {exc}") from exc
        return Branch(size=size, spec=spec, params=params, history=history)

    indices = range(len(espec.branch_sizes))
    if parallel and len(espec.branch_sizes) > 1:
        with ThreadPoolExecutor(max_workers=len(espec.branch_sizes)) as pool:
            branches = list(pool.map(train_branch, indices))
    else:
        branches = [train_branch(b) for b in indices]
    return EnsembleModel(espec=espec, branches=branches, seed=seed)


# --------------------------------------------------------------------------
# Prediction


def _branch_input(img: GrayImage, size: int) -> np.ndarray:
    return prepare_input(img, size)


def predict(model: EnsembleModel, img: GrayImage) -> Prediction:
    per_branch = []
    for branch in model.branches:
        x = _branch_input(img, branch.size)[None]
        probs, _ = forward_batch(branch.spec, branch.params, x, training=False)
        per_branch.append(probs[0])
    averaged = np.mean(per_branch, axis=0)
    return Prediction(per_branch=per_branch, averaged=averaged, score=float(averaged[1]))


def classify(pred: Prediction, cutoff: float) -> int:
    if not 0.0 <= cutoff <= 1.0:
        raise ValueError(f"cutoff must lie in [0, 1], got {cutoff}")
    return 1 if pred.score >= cutoff else 0


def score_images(model: EnsembleModel, images, batch_size: int = 32):
    """Positive-class scores for a list of images.

    Returns (ensemble_scores, per_branch_scores): the ensemble score is the
    mean over branches of each branch's softmax, taken at component 1.
    """
    per_branch = []
    for branch in model.branches:
        x = np.stack([_branch_input(img, branch.size) for img in images])
        probs = np.empty((len(images), 2), dtype=np.float64)
        for lo in range(0, len(images), batch_size):
            out, _ = forward_batch(branch.spec, branch.params,
                                   x[lo : lo + batch_size], training=False)
            probs[lo : lo + batch_size] = out
        per_branch.append(probs[:, 1])
    ensemble = np.mean(per_branch, axis=0)
    return ensemble, per_branch


# --------------------------------------------------------------------------
# Bundles


def save_bundle(model: EnsembleModel, dirpath) -> None:
    """A directory with one weight file per branch plus a JSON manifest."""
    os.makedirs(dirpath, exist_ok=True)
    branch_entries = []
    for branch in model.branches:
        wname = f"branch_{branch.size:04d}.w8"
        save_weights(os.path.join(dirpath, wname), branch.spec, branch.params,
                     extra={"size": branch.size})
        entry = {"size": branch.size, "weights": wname}
        if branch.history is not None:
            hname = f"history_{branch.size:04d}.json"
            with open(os.path.join(dirpath, hname), "w", encoding="utf-8") as f:
                json.dump(branch.history.to_dict(), f, sort_keys=True, indent=2)
                f.write("\n")
            entry["history"] = hname
        branch_entries.append(entry)
    manifest = {
        "format": "ensemble-bundle-v1",
        "branch_sizes": list(model.espec.branch_sizes),
        "arch": asdict(model.espec.arch),
        "seed": model.seed,
        "cutoff": model.cutoff,
        "metrics": model.metrics,
        "branches": branch_entries,
    }
    with open(os.path.join(dirpath, BUNDLE_MANIFEST), "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)
        f.write("\n")


def load_bundle(dirpath) -> EnsembleModel:
    mpath = os.path.join(dirpath, BUNDLE_MANIFEST)
    if not os.path.exists(mpath):
        raise FileNotFoundError(f"missing ensemble bundle manifest {mpath}")
    with open(mpath, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    arch_dict = manifest["arch"]
    espec = EnsembleSpec(branch_sizes=tuple(manifest["branch_sizes"]),
                         arch=ArchConfig(**arch_dict))
    branches = []
    for entry in manifest["branches"]:
        wf = load_weights(os.path.join(dirpath, entry["weights"]))
        history = None
        if entry.get("history"):
            with open(os.path.join(dirpath, entry["history"]), "r", encoding="utf-8") as f:
                history = History.from_dict(json.load(f))
        branches.append(Branch(size=entry["size"], spec=wf.spec,
                               params=wf.params, history=history))
    return EnsembleModel(espec=espec, branches=branches, seed=manifest["seed"],
                         cutoff=manifest["cutoff"], metrics=manifest["metrics"])
