"""RMSprop training loop: two-phase fine-tuning, early stopping, best-epoch restore.

Phase 1 updates only the parameters after the global average pool (the
classifier head); phase 2 unfreezes everything the caller left trainable.
Validation loss is computed in inference mode on unaugmented images.  The
best-validation parameters are checkpointed in memory (optionally on disk)
and restored before fit returns, so the returned weights always belong to
best_epoch.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import augment as aug
from . import imgio
from .nn.model import ModelParams, ModelSpec, head_param_names, loss_and_grads
from .nn.ops import cross_entropy  # canonical loss definition lives with the kernels
from .nn.weights import load_weights, save_weights
from .rng import make_rng

__all__ = [
    "TrainConfig", "RmsState", "EpochRecord", "History", "cross_entropy",
    "rmsprop_step", "early_stop", "fit", "save_checkpoint", "load_checkpoint",
]


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-4
    decay: float = 1e-8
    rho: float = 0.9
    epsilon: float = 1e-8
    batch_size: int = 16
    patience: int = 3
    max_epochs: int = 30
    phase1_epochs: int = 3
    decay_per_epoch: bool = False  # count the decay clock in epochs, not steps

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must be in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.patience < 1 or self.batch_size < 1:
            raise ValueError("patience and batch_size must be >= 1")
        if self.max_epochs < 1 or self.phase1_epochs < 0:
            raise ValueError("max_epochs >= 1 and phase1_epochs >= 0 required")
        if self.decay < 0:
            raise ValueError("decay must be non-negative")


@dataclass
class RmsState:
    """Per-parameter squared-gradient running means plus the decay clocks."""

    mean_sq: dict
    step: int = 0
    epoch: int = 0

    @classmethod
    def zeros(cls, params: ModelParams) -> "RmsState":
        return cls(mean_sq={k: np.zeros_like(v) for k, v in params.tensors.items()})


def current_lr(config: TrainConfig, state: RmsState) -> float:
    t = state.epoch if config.decay_per_epoch else state.step
    return config.lr0 / (1.0 + config.decay * t)


def rmsprop_step(params: ModelParams, grads: dict, state: RmsState,
                 config: TrainConfig):
    """One in-place update over the trainable parameters; returns (params, state).

    E <- rho*E + (1-rho)*g^2 and theta <- theta - lr_t * g / (sqrt(E) + eps),
    with lr_t read from the pre-increment step count.  Frozen parameters keep
    both their value and their accumulator untouched.
    """
    lr = current_lr(config, state)
    for name, theta in params.tensors.items():
        if not params.trainable.get(name, True):
            continue
        g = grads[name]
        if g.shape != theta.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {theta.shape} for {name}")
        e = state.mean_sq[name]
        e *= config.rho
        e += (1.0 - config.rho) * g * g
        theta -= lr * g / (np.sqrt(e) + config.epsilon)
    state.step += 1
    return params, state


@dataclass
class EpochRecord:
    epoch: int
    phase: int
    lr: float
    train_loss: float
    val_loss: float


@dataclass
class History:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def val_losses(self):
        return [e.val_loss for e in self.epochs]

    def to_dict(self) -> dict:
        return {
            "epochs": [
                {"epoch": e.epoch, "phase": e.phase, "lr": e.lr,
                 "train_loss": e.train_loss, "val_loss": e.val_loss}
                for e in self.epochs
            ],
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "History":
        hist = cls(best_epoch=data["best_epoch"], stopped_early=data["stopped_early"])
        hist.epochs = [EpochRecord(**e) for e in data["epochs"]]
        return hist


def _fails_to_improve(losses, i: int) -> bool:
    best_before = min(losses[:i]) if i > 0 else math.inf
    return not losses[i] < best_before


def early_stop(history: History, patience: int) -> bool:
    """True exactly when the last `patience` epochs each failed to strictly
    improve on the best validation loss seen before them."""
    losses = history.val_losses()
    n = len(losses)
    if n < patience:
        return False
    return all(_fails_to_improve(losses, i) for i in range(n - patience, n))


def best_epoch_index(losses) -> int:
    """1-based index of the minimum validation loss, earliest on ties."""
    best = min(losses)
    return losses.index(best) + 1


# --------------------------------------------------------------------------
# fit


def _default_loader(entry):
    return imgio.load_image(entry.path)


def prepare_input(img: imgio.GrayImage, size: int) -> np.ndarray:
    """Resize to the model's square input and centre intensities on zero.

    Pixels map to [-0.5, 0.5]; without the centring, the constant 0.5
    background dominates every activation and training crawls.
    """
    if img.width != size or img.height != size:
        img = aug.resize_bilinear(img, size, size)
    return (img.pixels.astype(np.float64) / img.max_value - 0.5)[None]


def _eval_loss(spec, params, x, labels, batch_size: int) -> float:
    total = 0.0
    for lo in range(0, len(labels), batch_size):
        xb = x[lo : lo + batch_size]
        yb = labels[lo : lo + batch_size]
        loss, _ = loss_and_grads(spec, params, xb, yb, rng=None)
        total += loss * len(yb)
    return total / len(labels)


def fit(spec: ModelSpec, init_params: ModelParams, split: imgio.DatasetSplit,
        train_config: TrainConfig, augment_config: aug.AugmentConfig,
        rng: np.random.Generator, loader=None, checkpoint_path=None, log=None):
    """Train on the split's train subset, early-stop on its validation subset.

    Returns (best-epoch ModelParams, History).  `loader` maps a manifest
    entry to a GrayImage (defaults to reading entry.path); `log` receives the
    per-epoch summary lines.
    """
    if not split.train or not split.validation:
        raise ValueError("fit needs non-empty train and validation subsets")
    loader = loader or _default_loader
    size = spec.input_size[1]
    if spec.input_size[2] != size or spec.input_size[0] != 1:
        raise ValueError("fit expects a single-channel square input spec")

    train_images = [loader(e) for e in split.train]
    train_labels = np.array([e.label for e in split.train], dtype=np.int64)
    val_x = np.stack([prepare_input(loader(e), size) for e in split.validation])
    val_labels = np.array([e.label for e in split.validation], dtype=np.int64)

    params = init_params.copy()
    user_trainable = dict(params.trainable)
    head = set(head_param_names(spec))
    state = RmsState.zeros(params)
    history = History()
    best_loss = math.inf
    best_params = params.copy()
    best_epoch = 0

    for epoch in range(1, train_config.max_epochs + 1):
        phase = 1 if epoch <= train_config.phase1_epochs else 2
        if phase == 1:
            params.trainable = {k: user_trainable[k] and k in head for k in user_trainable}
        else:
            params.trainable = dict(user_trainable)
        state.epoch = epoch - 1

        t0 = time.perf_counter()
        order = rng.permutation(len(train_images))
        batch_x = np.empty((len(order), 1, size, size), dtype=np.float64)
        for slot, idx in enumerate(order):
            prm = aug.sample_params(rng, augment_config)
            batch_x[slot] = prepare_input(aug.apply(train_images[idx], prm), size)
        batch_y = train_labels[order]

        running, seen = 0.0, 0
        lr_first = current_lr(train_config, state)
        for bi, lo in enumerate(range(0, len(order), train_config.batch_size)):
            xb = batch_x[lo : lo + train_config.batch_size]
            yb = batch_y[lo : lo + train_config.batch_size]
            loss, grads = loss_and_grads(spec, params, xb, yb, rng=rng)
            if not math.isfinite(loss):
                raise ArithmeticError(f"non-finite loss at epoch {epoch}, batch {bi}")
            rmsprop_step(params, grads, state, train_config)
            running += loss * len(yb)
            seen += len(yb)
        train_loss = running / seen
        val_loss = _eval_loss(spec, params, val_x, val_labels, train_config.batch_size)
        if not math.isfinite(val_loss):
            raise ArithmeticError(f"non-finite validation loss at epoch {epoch}")

        history.epochs.append(EpochRecord(epoch=epoch, phase=phase, lr=lr_first,
                                          train_loss=train_loss, val_loss=val_loss))
        if val_loss < best_loss:
            best_loss = val_loss
            best_epoch = epoch
            best_params = params.copy()
            best_params.trainable = dict(user_trainable)
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, spec, best_params, state, epoch)
        if log is not None:
            log(f"epoch {epoch:3d} phase {phase} lr {lr_first:.6e} "
                f"train_loss {train_loss:.6f} val_loss {val_loss:.6f} "
                f"elapsed {time.perf_counter() - t0:.2f}s")

        if early_stop(history, train_config.patience):
            history.stopped_early = True
            break

    history.best_epoch = best_epoch_index(history.val_losses())
    params = best_params  # restore: returned weights are exactly best_epoch's
    params.trainable = dict(user_trainable)
    return params, history


# --------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path, spec: ModelSpec, params: ModelParams,
                    state: RmsState, epoch: int) -> None:
    extra = {"checkpoint": {"epoch": epoch, "step": state.step, "state_epoch": state.epoch}}
    rms = {f"rms:{k}": v for k, v in state.mean_sq.items()}
    save_weights(path, spec, params, extra=extra, extra_tensors=rms)


def load_checkpoint(path):
    wf = load_weights(path)
    meta = wf.extra.get("checkpoint", {})
    mean_sq = {k[len("rms:"):]: v.copy() for k, v in wf.extra_tensors.items()
               if k.startswith("rms:")}
    state = RmsState(mean_sq=mean_sq, step=int(meta.get("step", 0)),
                     epoch=int(meta.get("state_epoch", 0)))
    return wf.spec, wf.params, state, int(meta.get("epoch", 0))
