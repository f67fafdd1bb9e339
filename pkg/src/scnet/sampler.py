"""Anchor/positive patch sampling and batch assembly.

Each batch draws N distinct images; from every image two patches are
cropped at independent uniform-random origins. The two crops may
overlap or even coincide, which leaves the loss well-defined. With a
single worker and a fixed rng the stream is deterministic; extra
workers trade that determinism for throughput.
"""

import queue
import threading
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass
class PatchPair:
    anchor: np.ndarray       # (C, P, P)
    positive: np.ndarray     # (C, P, P)
    image_index: int
    rects: tuple             # two (top, left, P) crop records


@dataclass
class SCBatch:
    anchors: np.ndarray      # (N, C, P, P)
    positives: np.ndarray    # (N, C, P, P)
    image_indices: np.ndarray
    rects: tuple = ()

    def __len__(self):
        return self.anchors.shape[0]


def default_patch_size(h, w):
    """Half the short image side, rounded up."""
    return -(-min(h, w) // 2)


def sample_pair(image, patch_size, rng, image_index=0):
    """Crop two independent uniform-random patches from one image."""
    c, h, w = image.shape
    p = patch_size
    if p > h or p > w:
        raise ShapeError(f"patch size {p} exceeds image {h}x{w}")
    tops = rng.integers(0, h - p + 1, size=2)
    lefts = rng.integers(0, w - p + 1, size=2)
    anchor = image[:, tops[0]:tops[0] + p, lefts[0]:lefts[0] + p]
    positive = image[:, tops[1]:tops[1] + p, lefts[1]:lefts[1] + p]
    return PatchPair(anchor=anchor, positive=positive,
                     image_index=image_index,
                     rects=((int(tops[0]), int(lefts[0]), p),
                            (int(tops[1]), int(lefts[1]), p)))


def make_batch(dataset, n, patch_size, rng):
    """Draw N distinct images and an anchor/positive pair from each."""
    if n < 2:
        raise ShapeError(f"batch needs N >= 2 for a contrast term, got {n}")
    if n > len(dataset):
        raise ShapeError(
            f"batch size {n} exceeds dataset size {len(dataset)}")
    indices = rng.choice(len(dataset), size=n, replace=False)
    pairs = [sample_pair(dataset.images[i], patch_size, rng, image_index=int(i))
             for i in indices]
    return SCBatch(
        anchors=np.stack([p.anchor for p in pairs]),
        positives=np.stack([p.positive for p in pairs]),
        image_indices=np.asarray(indices, dtype=np.int64),
        rects=tuple(p.rects for p in pairs))


def batch_stream(dataset, n, patch_size, rng, num_batches):
    """Deterministic single-worker batch generator."""
    for _ in range(num_batches):
        yield make_batch(dataset, n, patch_size, rng)


def threaded_batch_stream(dataset, n, patch_size, seed, num_batches,
                          num_workers, max_queue=8):
    """Producer/consumer batch feed with a bounded queue.

    Workers get independent seeded rngs; batch order is not
    deterministic across runs when num_workers > 1.
    """
    if num_workers <= 1:
        yield from batch_stream(dataset, n, patch_size,
                                np.random.default_rng(seed), num_batches)
        return

    q = queue.Queue(maxsize=max_queue)
    counts = [num_batches // num_workers] * num_workers
    for i in range(num_batches % num_workers):
        counts[i] += 1

    def worker(wid, count):
        wrng = np.random.default_rng(np.random.SeedSequence([seed, wid]))
        for _ in range(count):
            q.put(make_batch(dataset, n, patch_size, wrng))

    threads = [threading.Thread(target=worker, args=(i, cnt), daemon=True)
               for i, cnt in enumerate(counts)]
    for t in threads:
        t.start()
    for _ in range(num_batches):
        yield q.get()
    for t in threads:
        t.join()
