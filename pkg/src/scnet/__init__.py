"""Contrastive patch pretraining for small convolutional networks.

Pure numpy with an optional compiled kernel core; see scnet.backend for
which one is active.
"""

__version__ = "0.1.0"

from .backend import BACKEND
from .data import Dataset, load_cifar10_binary, subsample_labeled, synth_clustered
from .model import ModelSpec, ModelState, default_spec, init_params
from .sampler import PatchPair, SCBatch, make_batch, sample_pair
from .sc_loss import (FeatureBatch, SCLossResult, sc_batch_loss,
                      sc_multi_tap_loss, sc_pair_loss)
from .trainer import TrainConfig, TrainReport, evaluate, finetune, pretrain

__all__ = [
    "BACKEND", "Dataset", "FeatureBatch", "ModelSpec", "ModelState",
    "PatchPair", "SCBatch", "SCLossResult", "TrainConfig", "TrainReport",
    "default_spec", "evaluate", "finetune", "init_params",
    "load_cifar10_binary", "make_batch", "pretrain", "sample_pair",
    "sc_batch_loss", "sc_multi_tap_loss", "sc_pair_loss",
    "subsample_labeled", "synth_clustered",
]
