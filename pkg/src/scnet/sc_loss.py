"""Spatial contrasting loss.

Two patches are drawn from every image in a batch; the anchor feature of
image i should sit closer to its own positive feature than to any other
image's positive. Scoring is a softmax over negated L2 distances: with
d_ij = ||f1_i - f2_j||_2,

    loss = -(1/N) * sum_i log( exp(-d_ii) / sum_j exp(-d_ij) )

where the sum over j runs over all N columns including j = i. The N=1
batch is degenerate (softmax over one entry) and scores 0.

Gradients are analytic. ||u||_2 has no derivative at u = 0; we take the
subgradient 0 there, which only matters when anchor and positive
features coincide exactly and leaves the loss value untouched.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericsError, ShapeError


@dataclass
class FeatureBatch:
    """Anchor features f1 and positive features f2, both (N, D)."""

    f1: np.ndarray
    f2: np.ndarray

    def __post_init__(self):
        self.f1 = np.atleast_2d(np.asarray(self.f1, dtype=np.float64)
                                if np.asarray(self.f1).dtype not in
                                (np.float32, np.float64) else self.f1)
        self.f2 = np.atleast_2d(np.asarray(self.f2, dtype=np.float64)
                                if np.asarray(self.f2).dtype not in
                                (np.float32, np.float64) else self.f2)
        if self.f1.shape != self.f2.shape:
            raise ShapeError(
                f"feature batch halves disagree: {self.f1.shape} vs "
                f"{self.f2.shape}")
        if self.f1.size == 0:
            raise ShapeError("feature batch needs N >= 1 and D >= 1")
        if not (np.isfinite(self.f1).all() and np.isfinite(self.f2).all()):
            raise NumericsError("feature batch contains non-finite values")

    @property
    def n(self):
        return self.f1.shape[0]


@dataclass
class SCLossResult:
    loss: float
    grad_f1: np.ndarray
    grad_f2: np.ndarray
    distance_matrix: np.ndarray


@dataclass
class SCMultiTapResult:
    loss: float
    tap_losses: list = field(default_factory=list)
    grads_f1: list = field(default_factory=list)
    grads_f2: list = field(default_factory=list)


def _pairwise_l2(f1, f2):
    """d[i, j] = ||f1_i - f2_j||_2 via explicit differences.

    The expanded (N,N,D) buffer is fine at batch scale and keeps full
    precision, unlike the |a|^2 + |b|^2 - 2ab shortcut.
    """
    diff = f1[:, None, :] - f2[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2)), diff


def sc_pair_loss(f_anchor, f_positive, f_contrast):
    """Two-image loss: anchor vs its positive against one contrast patch."""
    vecs = []
    for name, v in (("anchor", f_anchor), ("positive", f_positive),
                    ("contrast", f_contrast)):
        v = np.asarray(v, dtype=np.float64).ravel()
        if not np.isfinite(v).all():
            raise NumericsError(f"{name} feature contains NaN/Inf")
        vecs.append(v)
    a, p, c = vecs
    if not (a.shape == p.shape == c.shape):
        raise ShapeError(
            f"feature dims disagree: {a.shape}, {p.shape}, {c.shape}")
    d_pos = np.linalg.norm(a - p)
    d_neg = np.linalg.norm(a - c)
    # -log softmax(-d_pos) over {-d_pos, -d_neg}
    return float(np.logaddexp(0.0, d_pos - d_neg))


def sc_batch_loss(batch):
    """Batch loss, distance matrix, and gradients w.r.t. both feature sets."""
    f1, f2 = batch.f1, batch.f2
    n = f1.shape[0]
    dist, diff = _pairwise_l2(f1, f2)

    scores = -dist
    row_max = scores.max(axis=1, keepdims=True)
    shifted = np.exp(scores - row_max)
    lse = row_max[:, 0] + np.log(shifted.sum(axis=1))
    softmax = shifted / shifted.sum(axis=1, keepdims=True)
    assert np.allclose(softmax.sum(axis=1), 1.0, atol=1e-6)

    diag = np.arange(n)
    loss = float((lse + dist[diag, diag]).mean())

    # dL/dd_ij = (delta_ij - p_ij) / N, chained through d = ||u||.
    dloss_ddist = -softmax.copy()
    dloss_ddist[diag, diag] += 1.0
    dloss_ddist /= n
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(dist > 0, dloss_ddist / dist, 0.0)
    grad_f1 = w.sum(axis=1, keepdims=True) * f1 - w @ f2
    grad_f2 = w.sum(axis=0)[:, None] * f2 - w.T @ f1

    if not np.isfinite(loss):
        raise NumericsError("sc_batch_loss produced a non-finite loss")
    return SCLossResult(loss=loss,
                        grad_f1=grad_f1.astype(f1.dtype, copy=False),
                        grad_f2=grad_f2.astype(f2.dtype, copy=False),
                        distance_matrix=dist)


def sc_multi_tap_loss(batches, weights):
    """Weighted sum of per-tap batch losses.

    Gradients in the result are already scaled by the tap weights, so a
    zero-weight tap contributes exactly zero gradient.
    """
    if len(batches) != len(weights):
        raise ShapeError(
            f"{len(batches)} feature batches but {len(weights)} weights")
    if len(batches) == 0:
        raise ShapeError("need at least one feature batch")
    if any(w < 0 for w in weights):
        raise ShapeError("tap weights must be non-negative")

    out = SCMultiTapResult(loss=0.0)
    for fb, w in zip(batches, weights):
        res = sc_batch_loss(fb)
        out.loss += w * res.loss
        out.tap_losses.append(res.loss)
        out.grads_f1.append(res.grad_f1 * fb.f1.dtype.type(w))
        out.grads_f2.append(res.grad_f2 * fb.f2.dtype.type(w))
    return out
