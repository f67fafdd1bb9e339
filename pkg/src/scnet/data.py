"""Dataset ingestion and the synthetic clustered-texture generator.

Three sources: the CIFAR-10 binary record layout (3073-byte records,
label byte then R/G/B planes), directories of 8-bit PPM files named
<label>_<id>.ppm (P6 color, P5 grayscale), and a procedural generator
whose classes are oriented gratings. Pixels always live in [0, 1].
"""

import os
import re
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, ShapeError

CIFAR_RECORD_BYTES = 3073
CIFAR_SHAPE = (3, 32, 32)


@dataclass
class Dataset:
    images: np.ndarray            # (N, C, H, W) float32 in [0, 1]
    labels: np.ndarray = None     # (N,) int64, or None for unlabeled
    name: str = ""
    num_classes: int = 0

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        if self.images.ndim != 4:
            raise ShapeError(
                f"dataset images must be (N,C,H,W), got {self.images.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if len(self.labels) != len(self.images):
                raise DataFormatError(
                    f"{len(self.labels)} labels for {len(self.images)} images")

    def __len__(self):
        return self.images.shape[0]

    @property
    def image_hw(self):
        return self.images.shape[2], self.images.shape[3]

    def unlabeled(self):
        return Dataset(images=self.images, labels=None, name=self.name,
                       num_classes=self.num_classes)


def load_cifar10_binary(path):
    """Read one CIFAR-10 binary batch file."""
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size % CIFAR_RECORD_BYTES != 0:
        raise DataFormatError(
            f"{path}: size {raw.size} is not a multiple of "
            f"{CIFAR_RECORD_BYTES}-byte records")
    n = raw.size // CIFAR_RECORD_BYTES
    if n == 0:
        return Dataset(images=np.zeros((0,) + CIFAR_SHAPE, np.float32),
                       labels=np.zeros(0, np.int64), name=str(path),
                       num_classes=10)
    records = raw.reshape(n, CIFAR_RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    if labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise DataFormatError(
            f"{path}: record {bad} has label byte {labels[bad]} > 9")
    images = records[:, 1:].reshape((n,) + CIFAR_SHAPE).astype(np.float32)
    images /= 255.0
    return Dataset(images=images, labels=labels, name=str(path),
                   num_classes=10)


def load_cifar10_files(paths):
    parts = [load_cifar10_binary(p) for p in paths]
    return Dataset(images=np.concatenate([p.images for p in parts]),
                   labels=np.concatenate([p.labels for p in parts]),
                   name=",".join(str(p) for p in paths), num_classes=10)


def save_cifar10_binary(dataset, path):
    """Write the binary record layout; pixels quantize to 1/255 steps."""
    if dataset.images.shape[1:] != CIFAR_SHAPE:
        raise DataFormatError(
            f"CIFAR records need (3,32,32) images, got "
            f"{dataset.images.shape[1:]}")
    if dataset.labels is None:
        raise DataFormatError("CIFAR records need labels")
    if len(dataset) and (dataset.labels.min() < 0 or dataset.labels.max() > 9):
        raise DataFormatError("CIFAR labels must be in [0, 9]")
    n = len(dataset)
    records = np.empty((n, CIFAR_RECORD_BYTES), dtype=np.uint8)
    records[:, 0] = dataset.labels
    pixels = np.rint(dataset.images * 255.0).astype(np.uint8)
    records[:, 1:] = pixels.reshape(n, -1)
    records.tofile(path)


def _read_ppm(path):
    """Parse a binary P6 (color) or P5 (grayscale) file, maxval 255."""
    with open(path, "rb") as fh:
        data = fh.read()

    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataFormatError(f"{path}: truncated header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval

    magic = tokens[0]
    if magic not in (b"P6", b"P5"):
        raise DataFormatError(f"{path}: expected P6 or P5, got {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise DataFormatError(f"{path}: bad header numbers") from exc
    if maxval != 255:
        raise DataFormatError(f"{path}: only 8-bit (maxval 255) supported, "
                              f"got {maxval}")
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    body = data[pos:pos + need]
    if len(body) != need:
        raise DataFormatError(f"{path}: expected {need} pixel bytes, "
                              f"got {len(body)}")
    img = np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels)
    return np.ascontiguousarray(img.transpose(2, 0, 1)).astype(np.float32) / 255.0


def _write_ppm(image, path):
    c, h, w = image.shape
    if c not in (1, 3):
        raise DataFormatError(f"PPM supports 1 or 3 channels, got {c}")
    magic = b"P6" if c == 3 else b"P5"
    pixels = np.rint(image * 255.0).astype(np.uint8).transpose(1, 2, 0)
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(pixels.tobytes())


_PPM_NAME = re.compile(r"^(\d+)_(\w+)\.ppm$")


def load_ppm_dir(path):
    """Load <label>_<id>.ppm files; all images must share one shape."""
    names = sorted(f for f in os.listdir(path) if f.endswith(".ppm"))
    if not names:
        raise DataFormatError(f"{path}: no .ppm files found")
    images, labels = [], []
    for name in names:
        m = _PPM_NAME.match(name)
        if not m:
            raise DataFormatError(
                f"{path}/{name}: file name must look like <label>_<id>.ppm")
        labels.append(int(m.group(1)))
        images.append(_read_ppm(os.path.join(path, name)))
    shapes = {im.shape for im in images}
    if len(shapes) > 1:
        raise DataFormatError(f"{path}: mixed image shapes {sorted(shapes)}")
    labels = np.asarray(labels, dtype=np.int64)
    return Dataset(images=np.stack(images), labels=labels, name=str(path),
                   num_classes=int(labels.max()) + 1)


def save_ppm_dir(dataset, path):
    if dataset.labels is None:
        raise DataFormatError("PPM export needs labels (they name the files)")
    os.makedirs(path, exist_ok=True)
    width = len(str(max(len(dataset) - 1, 1)))
    for i in range(len(dataset)):
        name = f"{int(dataset.labels[i])}_{i:0{width}d}.ppm"
        _write_ppm(dataset.images[i], os.path.join(path, name))


def subsample_labeled(dataset, per_class, seed):
    """Exactly per_class examples of every class, without replacement."""
    if dataset.labels is None:
        raise DataFormatError("subsample_labeled needs a labeled dataset")
    rng = np.random.default_rng(seed)
    chosen = []
    for k in range(dataset.num_classes):
        idx = np.flatnonzero(dataset.labels == k)
        if len(idx) < per_class:
            raise DataFormatError(
                f"class {k} has {len(idx)} examples, need {per_class}")
        if len(idx) == per_class:
            chosen.append(idx)
        else:
            chosen.append(rng.choice(idx, size=per_class, replace=False))
    keep = np.sort(np.concatenate(chosen))
    return Dataset(images=dataset.images[keep], labels=dataset.labels[keep],
                   name=f"{dataset.name}[{per_class}/class]",
                   num_classes=dataset.num_classes)


def synth_clustered(num_classes, per_class, image_size, seed, channels=1,
                    noise=0.1, ramp_scale=0.4):
    """Procedural texture classes: oriented gratings under a random
    luminance ramp.

    Class k gets a fixed orientation (k/num_classes of a half turn) and
    one of three frequency bands; each image draws its own grating phase
    plus small frequency/orientation jitter. The per-image ramp and the
    per-pixel noise field are what make two patches of the same image
    pixel-correlated no matter where they were cropped: a linear ramp
    keeps the same within-patch shape under translation, and overlapping
    crops share noise. The grating alone would not do it (shifting a
    sinusoid decorrelates it on average).
    """
    rng = np.random.default_rng(seed)
    s = image_size
    n = num_classes * per_class
    images = np.empty((n, channels, s, s), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    yy, xx = np.meshgrid(np.linspace(0.0, 1.0, s), np.linspace(0.0, 1.0, s),
                         indexing="ij")
    i = 0
    for k in range(num_classes):
        theta_k = np.pi * k / num_classes
        freq_k = 4.0 + 2.0 * (k % 3)
        for _ in range(per_class):
            theta = theta_k + rng.normal(0.0, 0.03)
            freq = freq_k * rng.uniform(0.95, 1.05)
            phase = rng.uniform(0.0, 2 * np.pi)
            amp = rng.uniform(0.7, 1.0)
            wave = np.sin(2 * np.pi * freq *
                          (xx * np.cos(theta) + yy * np.sin(theta))
                          + phase)
            slope_y, slope_x = rng.normal(0.0, ramp_scale, 2)
            ramp = slope_y * (yy - 0.5) + slope_x * (xx - 0.5)
            img = 0.5 + 0.3 * amp * wave + ramp
            img = img[None, :, :] + rng.normal(0.0, noise, (channels, s, s))
            images[i] = np.clip(img, 0.0, 1.0)
            labels[i] = k
            i += 1
    return Dataset(images=images, labels=labels,
                   name=f"synth{num_classes}x{per_class}@{s}",
                   num_classes=num_classes)
