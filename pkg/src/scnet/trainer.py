"""Two-phase training driver.

Phase one pretrains on unlabeled images with the contrastive patch
criterion; phase two fine-tunes every parameter with softmax
cross-entropy on full labeled images, starting from the pretrained
state. Both phases run plain SGD with classical momentum and an
optional step-decay schedule, and both abort with a diagnostic if the
loss ever goes non-finite.

Per-epoch records stream as JSON lines through log_fn, one object per
epoch with epoch/phase/loss/lr and accuracy when labels are around.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import model as model_mod
from . import sampler
from .errors import ConfigError, DataFormatError, NumericsError, TrainingDiverged
from .sc_loss import FeatureBatch, sc_multi_tap_loss


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr: float = 0.05
    lr_decay: float = 1.0
    lr_decay_epochs: tuple = ()
    momentum: float = 0.9
    epochs: int = 1
    seed: int = 0
    phase: str = "pretrain"
    patch_size: int = None       # None: half the short image side
    num_workers: int = 1
    steps_per_epoch: int = None  # None: len(dataset) // batch_size

    def validate(self):
        if self.phase not in ("pretrain", "finetune"):
            raise ConfigError(f"unknown phase {self.phase!r}")
        if self.phase == "pretrain" and self.batch_size < 2:
            raise ConfigError("pretraining needs batch_size >= 2 "
                              "(the loss contrasts across images)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.lr < 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(
                f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")

    def lr_at(self, epoch):
        decays = sum(1 for e in self.lr_decay_epochs if epoch >= e)
        return self.lr * self.lr_decay ** decays


@dataclass
class TrainReport:
    records: list = field(default_factory=list)  # per-epoch dicts
    final_state: model_mod.ModelState = None
    wall_seconds: float = 0.0

    @property
    def losses(self):
        return [r["loss"] for r in self.records]


def _emit(log_fn, record):
    if log_fn is not None:
        log_fn(json.dumps(record, sort_keys=True))


def sgd_update(state, grads, velocity, lr, momentum):
    """Classical momentum: v <- mu v - lr g; p <- p + v.

    Parameters without a gradient entry (layers the current phase never
    reaches, like the classifier head during pretraining) are left
    untouched.
    """
    for name, p in state.params.items():
        if name not in grads:
            continue
        g = grads[name].astype(p.dtype, copy=False)
        v = velocity[name]
        v *= p.dtype.type(momentum)
        v -= p.dtype.type(lr) * g
        p += v
    state.step_count += 1


def cross_entropy_loss(logits, labels):
    """Mean softmax cross-entropy and its gradient w.r.t. logits."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise DataFormatError(
            f"{labels.shape} labels for {n} logit rows")
    if len(labels) and (labels.min() < 0 or labels.max() >= k):
        bad = int(np.argmax((labels < 0) | (labels >= k)))
        raise DataFormatError(
            f"label {labels[bad]} at row {bad} out of range [0, {k})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = float(-log_probs[np.arange(n), labels].mean())
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, grad.astype(logits.dtype, copy=False)


def _zero_like_params(state):
    return {k: np.zeros_like(v) for k, v in state.params.items()}


def _check_loss(loss, phase, step):
    if not np.isfinite(loss):
        raise TrainingDiverged(
            f"{phase} loss became non-finite at step {step}")


def pretrain(spec, init_state, dataset, config, log_fn=print):
    """Contrastive pretraining on (ignored-)unlabeled images."""
    config.validate()
    if config.phase != "pretrain":
        raise ConfigError(f"pretrain called with phase {config.phase!r}")
    if not spec.taps:
        raise ConfigError("model has no feature tap to pretrain against")
    t0 = time.perf_counter()
    state = init_state.copy()
    velocity = _zero_like_params(state)
    h, w = dataset.image_hw
    patch = config.patch_size or sampler.default_patch_size(h, w)
    steps_per_epoch = config.steps_per_epoch or max(
        1, len(dataset) // config.batch_size)
    weights = spec.tap_weights

    report = TrainReport()
    step = 0
    for epoch in range(1, config.epochs + 1):
        lr = config.lr_at(epoch)
        batches = sampler.threaded_batch_stream(
            dataset, config.batch_size, patch, seed=config.seed * 100003 + epoch,
            num_batches=steps_per_epoch, num_workers=config.num_workers)
        epoch_losses = []
        for batch in batches:
            step += 1
            try:
                feats1, cache1 = model_mod.forward(spec, state,
                                                   batch.anchors,
                                                   mode="features",
                                                   want_cache=True)
                feats2, cache2 = model_mod.forward(spec, state,
                                                   batch.positives,
                                                   mode="features",
                                                   want_cache=True)
                result = sc_multi_tap_loss(
                    [FeatureBatch(a, b) for a, b in zip(feats1, feats2)],
                    weights)
                _check_loss(result.loss, "pretrain", step)
                grads1, _ = model_mod.backward(spec, state, cache1,
                                               result.grads_f1)
                grads2, _ = model_mod.backward(spec, state, cache2,
                                               result.grads_f2)
            except NumericsError as exc:
                raise TrainingDiverged(
                    f"pretrain diverged at step {step}: {exc}") from exc
            grads = {k: grads1[k] + grads2[k] for k in grads1}
            sgd_update(state, grads, velocity, lr, config.momentum)
            epoch_losses.append(result.loss)
        record = {"epoch": epoch, "phase": "pretrain",
                  "loss": float(np.mean(epoch_losses)), "lr": lr}
        report.records.append(record)
        _emit(log_fn, record)
    report.final_state = state
    report.wall_seconds = time.perf_counter() - t0
    return report


def finetune(spec, init_state, dataset, config, eval_dataset=None,
             log_fn=print):
    """Supervised cross-entropy training of all parameters."""
    config.validate()
    if config.phase != "finetune":
        raise ConfigError(f"finetune called with phase {config.phase!r}")
    if dataset.labels is None:
        raise DataFormatError("finetune needs a labeled dataset")
    t0 = time.perf_counter()
    state = init_state.copy()
    velocity = _zero_like_params(state)
    rng = np.random.default_rng(config.seed)

    report = TrainReport()
    step = 0
    for epoch in range(1, config.epochs + 1):
        lr = config.lr_at(epoch)
        order = rng.permutation(len(dataset))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            take = order[start:start + config.batch_size]
            step += 1
            images = dataset.images[take]
            labels = dataset.labels[take]
            try:
                logits, cache = model_mod.forward(spec, state, images,
                                                  mode="logits",
                                                  want_cache=True)
                loss, dlogits = cross_entropy_loss(logits, labels)
                _check_loss(loss, "finetune", step)
                grads, _ = model_mod.backward(spec, state, cache, dlogits)
            except NumericsError as exc:
                raise TrainingDiverged(
                    f"finetune diverged at step {step}: {exc}") from exc
            sgd_update(state, grads, velocity, lr, config.momentum)
            epoch_losses.append(loss)
        record = {"epoch": epoch, "phase": "finetune",
                  "loss": float(np.mean(epoch_losses)), "lr": lr}
        if eval_dataset is not None:
            record["accuracy"] = evaluate(spec, state, eval_dataset)
        report.records.append(record)
        _emit(log_fn, record)
    report.final_state = state
    report.wall_seconds = time.perf_counter() - t0
    return report


def evaluate(spec, state, dataset, batch_size=256):
    """Top-1 accuracy over a labeled dataset."""
    if dataset.labels is None:
        raise DataFormatError("evaluate needs a labeled dataset")
    hits = 0
    for start in range(0, len(dataset), batch_size):
        images = dataset.images[start:start + batch_size]
        logits = model_mod.forward(spec, state, images, mode="logits")
        hits += int((logits.argmax(axis=1) ==
                     dataset.labels[start:start + batch_size]).sum())
    return hits / len(dataset)
