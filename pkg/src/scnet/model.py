"""Feed-forward conv net description, parameters, and execution.

A model is an ordered list of layers out of {conv, relu, maxpool, gap,
affine}. One or more layers are marked as feature taps: in feature mode
the tapped outputs, globally average-pooled, are the vectors handed to
the contrastive loss. In logits mode the full stack runs and the last
affine produces class scores. Because spatial dims collapse at the gap,
the same model accepts any input size, so it can pretrain on patches
and classify full images.

Text format, one layer per line (see parse_spec):

    input 3
    conv 16 3 1 1      # out_channels kernel [stride] [pad]
    relu
    maxpool 2          # window [stride]
    gap
    affine 10
    tap 8 1.0          # layer index and weight; repeatable
"""

from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import ConfigError

LAYER_KINDS = ("conv", "relu", "maxpool", "gap", "affine")


@dataclass(frozen=True)
class Layer:
    kind: str
    out_channels: int = 0   # conv
    kernel: int = 0         # conv / maxpool window
    stride: int = 1
    pad: int = 0
    out_features: int = 0   # affine


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple
    in_channels: int = 3
    taps: tuple = ()        # ((layer_index, weight), ...)

    @property
    def num_classes(self):
        for layer in reversed(self.layers):
            if layer.kind == "affine":
                return layer.out_features
        return 0

    @property
    def tap_indices(self):
        return tuple(t[0] for t in self.taps)

    @property
    def tap_weights(self):
        return tuple(t[1] for t in self.taps)


@dataclass
class ModelState:
    params: dict
    step_count: int = 0

    def copy(self):
        return ModelState(params={k: v.copy() for k, v in self.params.items()},
                          step_count=self.step_count)


def default_spec(num_classes=10, in_channels=3):
    """Reference architecture: three conv-relu-pool blocks, gap, head."""
    layers = []
    for width in (16, 32, 64):
        layers.append(Layer("conv", out_channels=width, kernel=3, stride=1,
                            pad=1))
        layers.append(Layer("relu"))
        layers.append(Layer("maxpool", kernel=2, stride=2))
    layers.append(Layer("gap"))
    layers.append(Layer("affine", out_features=num_classes))
    # tap the last pooling output; its gap equals the gap layer's output
    return ModelSpec(layers=tuple(layers), in_channels=in_channels,
                     taps=((8, 1.0),))


def _channels_through(spec):
    """Channel/feature count after each layer, ignoring spatial dims."""
    c = spec.in_channels
    out = []
    for layer in spec.layers:
        if layer.kind == "conv":
            c = layer.out_channels
        elif layer.kind == "affine":
            c = layer.out_features
        out.append(c)
    return out


def validate(spec, input_hw):
    """Chain-check all layer shapes for (in_channels, H, W) input.

    Returns the list of per-layer output shapes. Raises ConfigError
    naming the first offending layer before any compute happens.
    """
    if spec.in_channels < 1:
        raise ConfigError(f"in_channels must be positive, got {spec.in_channels}")
    h, w = input_hw
    c = spec.in_channels
    spatial = True  # 4-d activations until gap/affine
    shapes = []
    for i, layer in enumerate(spec.layers):
        where = f"layer {i} ({layer.kind})"
        if layer.kind == "conv":
            if not spatial:
                raise ConfigError(f"{where}: conv needs a 4-d input, "
                                  "but spatial dims were already pooled away")
            try:
                h, w = ops.conv_out_hw(h, w, layer.kernel, layer.kernel,
                                       layer.stride, layer.pad)
            except Exception as exc:
                raise ConfigError(f"{where}: {exc}") from exc
            if layer.out_channels < 1:
                raise ConfigError(f"{where}: out_channels must be positive")
            c = layer.out_channels
        elif layer.kind == "maxpool":
            if not spatial:
                raise ConfigError(f"{where}: maxpool needs a 4-d input")
            if layer.kernel > h or layer.kernel > w:
                raise ConfigError(
                    f"{where}: window {layer.kernel} exceeds input {h}x{w}")
            h = (h - layer.kernel) // layer.stride + 1
            w = (w - layer.kernel) // layer.stride + 1
        elif layer.kind == "gap":
            if not spatial:
                raise ConfigError(f"{where}: input already pooled")
            spatial = False
        elif layer.kind == "affine":
            if spatial:
                raise ConfigError(f"{where}: affine needs a 2-d input; "
                                  "add gap before it")
            if layer.out_features < 1:
                raise ConfigError(f"{where}: out_features must be positive")
            c = layer.out_features
        elif layer.kind != "relu":
            raise ConfigError(f"{where}: unknown layer kind")
        shapes.append((c, h, w) if spatial else (c,))
    for idx, weight in spec.taps:
        if not 0 <= idx < len(spec.layers):
            raise ConfigError(f"tap index {idx} out of range "
                              f"(model has {len(spec.layers)} layers)")
        if weight < 0:
            raise ConfigError(f"tap {idx}: weight must be non-negative")
    return shapes


def init_params(spec, seed, dtype=np.float32):
    """He fan-in normal weights, zero biases; deterministic per seed."""
    rng = np.random.default_rng(seed)
    params = {}
    channels = [spec.in_channels] + _channels_through(spec)
    for i, layer in enumerate(spec.layers):
        c_in = channels[i]
        if layer.kind == "conv":
            fan_in = c_in * layer.kernel * layer.kernel
            shape = (layer.out_channels, c_in, layer.kernel, layer.kernel)
            params[f"layer{i}.weight"] = (
                rng.normal(0.0, np.sqrt(2.0 / fan_in), shape).astype(dtype))
            params[f"layer{i}.bias"] = np.zeros(layer.out_channels, dtype=dtype)
        elif layer.kind == "affine":
            params[f"layer{i}.weight"] = (
                rng.normal(0.0, np.sqrt(2.0 / c_in),
                           (c_in, layer.out_features)).astype(dtype))
            params[f"layer{i}.bias"] = np.zeros(layer.out_features, dtype=dtype)
    return ModelState(params=params, step_count=0)


def forward(spec, state, x, mode="logits", want_cache=False):
    """Run the network.

    mode="logits" returns (N, num_classes). mode="features" returns a
    list with one (N, D_t) matrix per tap, each globally average-pooled
    when the tapped output is 4-d.

    With want_cache=True returns (output, cache); hand the cache to
    backward().
    """
    if mode not in ("logits", "features"):
        raise ConfigError(f"unknown forward mode {mode!r}")
    x = np.ascontiguousarray(x)
    if x.ndim != 4:
        raise ConfigError(f"forward expects (N,C,H,W) input, got {x.shape}")
    if x.shape[1] != spec.in_channels:
        raise ConfigError(f"input has {x.shape[1]} channels, model declares "
                          f"{spec.in_channels}")
    validate(spec, (x.shape[2], x.shape[3]))
    if mode == "features" and not spec.taps:
        raise ConfigError("feature mode needs at least one tap")

    last = (len(spec.layers) - 1 if mode == "logits"
            else max(spec.tap_indices))
    inputs = []       # layer i consumed inputs[i]
    pool_args = {}    # layer index -> argmax cache
    feats = []
    out = x
    for i, layer in enumerate(spec.layers[:last + 1]):
        inputs.append(out)
        if layer.kind == "conv":
            out = ops.conv2d(out, state.params[f"layer{i}.weight"],
                             state.params[f"layer{i}.bias"],
                             layer.stride, layer.pad)
        elif layer.kind == "relu":
            out = ops.relu(out)
        elif layer.kind == "maxpool":
            out, argmax = ops.maxpool2d(out, layer.kernel, layer.stride)
            pool_args[i] = argmax
        elif layer.kind == "gap":
            out = ops.global_avg_pool(out)
        elif layer.kind == "affine":
            out = ops.affine(out, state.params[f"layer{i}.weight"],
                             state.params[f"layer{i}.bias"])
        if mode == "features" and i in spec.tap_indices:
            feats.append(ops.global_avg_pool(out) if out.ndim == 4 else out)

    result = feats if mode == "features" else out
    if not want_cache:
        return result
    cache = {"mode": mode, "inputs": inputs, "pool_args": pool_args,
             "last": last, "out_shapes": [a.shape for a in inputs[1:]]
             + [out.shape]}
    return result, cache


def backward(spec, state, cache, output_grad):
    """Backpropagate through a cached forward pass.

    In logits mode output_grad is the (N, num_classes) gradient; in
    feature mode it is a list with one (N, D_t) gradient per tap
    (ordered like spec.taps). Returns (param_grads, input_grad).
    """
    if cache is None:
        raise ConfigError("backward needs the cache from "
                          "forward(..., want_cache=True)")
    mode = cache["mode"]
    inputs = cache["inputs"]
    last = cache["last"]

    if mode == "features":
        tap_grads = dict(zip(spec.tap_indices, output_grad))
        g = None
    else:
        g = np.ascontiguousarray(output_grad)

    param_grads = {}
    for i in range(last, -1, -1):
        layer = spec.layers[i]
        x_in = inputs[i]
        out_shape = cache["out_shapes"][i]
        if mode == "features" and i in tap_grads:
            tg = tap_grads[i]
            if len(out_shape) == 4:
                tg = ops.global_avg_pool_backward(
                    tg.astype(x_in.dtype, copy=False), out_shape)
            inject = tg.astype(x_in.dtype, copy=False)
            g = inject if g is None else g + inject
        if g is None:
            # above the deepest tap nothing was executed
            raise ConfigError("backward: no gradient reached the top layer")

        if layer.kind == "conv":
            g, dw, db = ops.conv2d_backward(
                g, x_in, state.params[f"layer{i}.weight"], layer.stride,
                layer.pad)
            param_grads[f"layer{i}.weight"] = dw
            param_grads[f"layer{i}.bias"] = db
        elif layer.kind == "relu":
            g = ops.relu_backward(g, x_in)
        elif layer.kind == "maxpool":
            g = ops.maxpool2d_backward(g, cache["pool_args"][i], x_in.shape,
                                       layer.kernel, layer.stride)
        elif layer.kind == "gap":
            g = ops.global_avg_pool_backward(g, x_in.shape)
        elif layer.kind == "affine":
            g, dw, db = ops.affine_backward(
                g, x_in, state.params[f"layer{i}.weight"])
            param_grads[f"layer{i}.weight"] = dw
            param_grads[f"layer{i}.bias"] = db
    return param_grads, g


def parse_spec(text):
    """Parse the line-oriented model description."""
    layers = []
    taps = []
    in_channels = 3
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind, args = parts[0], parts[1:]
        if kind not in LAYER_KINDS + ("input", "tap"):
            raise ConfigError(f"line {lineno}: unknown directive {kind!r}")
        try:
            if kind == "input":
                in_channels = int(args[0])
            elif kind == "conv":
                out_ch, k = int(args[0]), int(args[1])
                stride = int(args[2]) if len(args) > 2 else 1
                pad = int(args[3]) if len(args) > 3 else 0
                layers.append(Layer("conv", out_channels=out_ch, kernel=k,
                                    stride=stride, pad=pad))
            elif kind == "relu":
                layers.append(Layer("relu"))
            elif kind == "maxpool":
                k = int(args[0])
                stride = int(args[1]) if len(args) > 1 else k
                layers.append(Layer("maxpool", kernel=k, stride=stride))
            elif kind == "gap":
                layers.append(Layer("gap"))
            elif kind == "affine":
                layers.append(Layer("affine", out_features=int(args[0])))
            elif kind == "tap":
                idx = int(args[0])
                weight = float(args[1]) if len(args) > 1 else 1.0
                taps.append((idx, weight))
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"line {lineno}: bad arguments for {kind!r}: "
                              f"{raw.strip()!r}") from exc
    if not layers:
        raise ConfigError("model spec has no layers")
    if not taps:
        # default: tap the layer feeding the first gap (or the last layer)
        gap_at = next((i for i, l in enumerate(layers) if l.kind == "gap"),
                      len(layers))
        taps = [(max(gap_at - 1, 0), 1.0)]
    return ModelSpec(layers=tuple(layers), in_channels=in_channels,
                     taps=tuple(taps))


def format_spec(spec):
    """Canonical text encoding; parse_spec(format_spec(s)) == s."""
    lines = [f"input {spec.in_channels}"]
    for layer in spec.layers:
        if layer.kind == "conv":
            lines.append(f"conv {layer.out_channels} {layer.kernel} "
                         f"{layer.stride} {layer.pad}")
        elif layer.kind == "maxpool":
            lines.append(f"maxpool {layer.kernel} {layer.stride}")
        elif layer.kind == "affine":
            lines.append(f"affine {layer.out_features}")
        else:
            lines.append(layer.kind)
    for idx, weight in spec.taps:
        lines.append(f"tap {idx} {weight!r}")
    return "\n".join(lines) + "\n"


def load_spec(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_spec(fh.read())
