"""Central finite-difference verification of every analytic gradient.

Each check builds a scalar functional s = sum(output * R) for a fixed
random R, compares the backward pass against (s(x+eps) - s(x-eps)) /
(2 eps) elementwise, and reports the worst relative error with the
denominator floored at 1: err = |a - b| / max(1, |a|, |b|).

Everything runs in float64. Inputs near the kinks of relu and maxpool
are resampled: a point within a hair of a tie or of zero makes the
finite difference straddle two linear pieces and says nothing about the
analytic gradient.
"""

import numpy as np

from . import backend
from . import model as model_mod
from . import ops
from .sc_loss import FeatureBatch, sc_batch_loss
from .trainer import cross_entropy_loss

DEFAULT_EPS = 1e-5
KINK_MARGIN = 1e-3
MODEL_KINK_MARGIN = 5e-3  # deep nets amplify an eps input wiggle


def rel_err(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    if a.size == 0:
        return 0.0
    return float((np.abs(a - b) / denom).max())


def fd_grad(func, arr, eps=DEFAULT_EPS):
    """Central differences of scalar func w.r.t. every element of arr.

    arr is mutated in place during probing and restored afterwards;
    func must read the current contents on every call.
    """
    grad = np.zeros(arr.shape, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = func()
        flat[i] = orig - eps
        down = func()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * eps)
    return grad


def _separated_relu_input(rng, shape):
    x = rng.standard_normal(shape)
    x[np.abs(x) < KINK_MARGIN] += 4 * KINK_MARGIN
    return x


def _separated_pool_input(rng, shape, k, stride, tries=50):
    """Input whose pooling windows have no near-ties."""
    n, c, h, w = shape
    if k == 1:
        return rng.standard_normal(shape)
    for _ in range(tries):
        x = rng.standard_normal(shape)
        col = backend.im2col(x, k, k, stride, 0).reshape(-1, c, k * k)
        sorted_win = np.sort(col, axis=2)
        gap = np.diff(sorted_win, axis=2)[..., -1]  # top-two separation
        if gap.min() > 10 * KINK_MARGIN:
            return x
    raise RuntimeError("could not draw a tie-free pooling input")


def check_conv2d(rng, eps=DEFAULT_EPS):
    n, c, k = rng.integers(1, 4, size=3)
    kh = int(rng.integers(1, 4))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, 2))
    h = int(rng.integers(kh, 5))
    w = int(rng.integers(kh, 5))
    x = rng.standard_normal((n, c, h, w))
    wgt = rng.standard_normal((k, c, kh, kh))
    b = rng.standard_normal(k)
    r = rng.standard_normal(
        (n, k) + ops.conv_out_hw(h, w, kh, kh, stride, pad))

    def s():
        return float((ops.conv2d(x, wgt, b, stride, pad) * r).sum())

    dx, dw, db = ops.conv2d_backward(r, x, wgt, stride, pad)
    return max(rel_err(dx, fd_grad(s, x, eps)),
               rel_err(dw, fd_grad(s, wgt, eps)),
               rel_err(db, fd_grad(s, b, eps)))


def check_maxpool2d(rng, eps=DEFAULT_EPS):
    n, c = rng.integers(1, 4, size=2)
    k = int(rng.integers(1, 4))
    stride = int(rng.integers(1, 3))
    h = int(rng.integers(k, 6))
    w = int(rng.integers(k, 6))
    x = _separated_pool_input(rng, (int(n), int(c), h, w), k, stride)
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    r = rng.standard_normal((int(n), int(c), oh, ow))

    def s():
        return float((ops.maxpool2d(x, k, stride)[0] * r).sum())

    _, argmax = ops.maxpool2d(x, k, stride)
    dx = ops.maxpool2d_backward(r, argmax, x.shape, k, stride)
    return rel_err(dx, fd_grad(s, x, eps))


def check_relu(rng, eps=DEFAULT_EPS):
    shape = tuple(rng.integers(1, 5, size=4))
    x = _separated_relu_input(rng, shape)
    r = rng.standard_normal(shape)

    def s():
        return float((ops.relu(x) * r).sum())

    return rel_err(ops.relu_backward(r, x), fd_grad(s, x, eps))


def check_affine(rng, eps=DEFAULT_EPS):
    n, d, m = (int(v) for v in rng.integers(1, 5, size=3))
    x = rng.standard_normal((n, d))
    w = rng.standard_normal((d, m))
    b = rng.standard_normal(m)
    r = rng.standard_normal((n, m))

    def s():
        return float((ops.affine(x, w, b) * r).sum())

    dx, dw, db = ops.affine_backward(r, x, w)
    return max(rel_err(dx, fd_grad(s, x, eps)),
               rel_err(dw, fd_grad(s, w, eps)),
               rel_err(db, fd_grad(s, b, eps)))


def check_global_avg_pool(rng, eps=DEFAULT_EPS):
    shape = tuple(rng.integers(1, 5, size=4))
    x = rng.standard_normal(shape)
    r = rng.standard_normal(shape[:2])

    def s():
        return float((ops.global_avg_pool(x) * r).sum())

    dx = ops.global_avg_pool_backward(r, shape)
    return rel_err(dx, fd_grad(s, x, eps))


def toy_spec():
    """Two conv blocks, gap, two-way head; tap on the second relu."""
    layers = (
        model_mod.Layer("conv", out_channels=3, kernel=3, stride=1, pad=1),
        model_mod.Layer("relu"),
        model_mod.Layer("maxpool", kernel=2, stride=2),
        model_mod.Layer("conv", out_channels=4, kernel=3, stride=1, pad=1),
        model_mod.Layer("relu"),
        model_mod.Layer("gap"),
        model_mod.Layer("affine", out_features=2),
    )
    return model_mod.ModelSpec(layers=layers, in_channels=2, taps=((4, 1.0),))


def _model_margins(spec, state, x):
    """Distance of the forward pass from every relu/pool kink."""
    _, cache = model_mod.forward(spec, state, x, mode="logits",
                                 want_cache=True)
    margin = np.inf
    for i, layer in enumerate(spec.layers[:cache["last"] + 1]):
        if layer.kind == "relu":
            margin = min(margin, float(np.abs(cache["inputs"][i]).min()))
        elif layer.kind == "maxpool":
            col = backend.im2col(cache["inputs"][i], layer.kernel,
                                 layer.kernel, layer.stride, 0)
            win = np.sort(col.reshape(col.shape[0], -1, layer.kernel ** 2),
                          axis=2)
            if win.shape[2] > 1:
                top1, top2 = win[..., -1], win[..., -2]
                # ties among relu zeros carry no gradient; only near-ties
                # between live values make the finite difference lie
                gaps = np.where(top2 > 0, top1 - top2, np.inf)
                margin = min(margin, float(gaps.min()))
    return margin


def check_model(rng, mode="logits", eps=DEFAULT_EPS, tries=50):
    """End-to-end check of the composed toy network in either mode."""
    spec = toy_spec()
    state = model_mod.init_params(spec, seed=int(rng.integers(1 << 31)),
                                  dtype=np.float64)
    for _ in range(tries):
        x = rng.standard_normal((2, 2, 6, 6))
        if _model_margins(spec, state, x) > MODEL_KINK_MARGIN:
            break
    else:
        raise RuntimeError("could not find a kink-free model input")

    if mode == "logits":
        r = rng.standard_normal((2, 2))

        def s():
            return float(
                (model_mod.forward(spec, state, x, mode="logits") * r).sum())

        grad_out = r
    else:
        feats = model_mod.forward(spec, state, x, mode="features")
        rs = [rng.standard_normal(f.shape) for f in feats]

        def s():
            out = model_mod.forward(spec, state, x, mode="features")
            return float(sum((f * r).sum() for f, r in zip(out, rs)))

        grad_out = rs

    _, cache = model_mod.forward(spec, state, x, mode=mode, want_cache=True)
    param_grads, dx = model_mod.backward(spec, state, cache, grad_out)

    worst = rel_err(dx, fd_grad(s, x, eps))
    for name in state.params:
        # layers above the deepest tap never run in feature mode; their
        # analytic gradient is an implicit zero
        analytic = param_grads.get(name, np.zeros_like(state.params[name]))
        worst = max(worst, rel_err(analytic, fd_grad(s, state.params[name],
                                                     eps)))
    return worst


def check_sc_loss(rng, eps=1e-6):
    n = int(rng.integers(1, 7))
    d = int(rng.integers(1, 9))
    f1 = rng.standard_normal((n, d))
    f2 = rng.standard_normal((n, d))

    def s():
        return sc_batch_loss(FeatureBatch(f1, f2)).loss

    res = sc_batch_loss(FeatureBatch(f1, f2))
    return max(rel_err(res.grad_f1, fd_grad(s, f1, eps)),
               rel_err(res.grad_f2, fd_grad(s, f2, eps)))


def check_cross_entropy(rng, eps=1e-6):
    n = int(rng.integers(1, 5))
    k = int(rng.integers(2, 6))
    logits = rng.standard_normal((n, k))
    labels = rng.integers(0, k, size=n)

    def s():
        return cross_entropy_loss(logits, labels)[0]

    _, grad = cross_entropy_loss(logits, labels)
    return rel_err(grad, fd_grad(s, logits, eps))


SUITE = (
    # (name, check, trials, threshold)
    ("conv2d", check_conv2d, 50, 1e-4),
    ("maxpool2d", check_maxpool2d, 50, 1e-4),
    ("relu", check_relu, 50, 1e-4),
    ("affine", check_affine, 50, 1e-4),
    ("global_avg_pool", check_global_avg_pool, 50, 1e-4),
    ("model_logits", lambda rng: check_model(rng, "logits"), 5, 1e-4),
    ("model_features", lambda rng: check_model(rng, "features"), 5, 1e-4),
    ("sc_batch_loss", check_sc_loss, 100, 1e-5),
    ("cross_entropy", check_cross_entropy, 50, 1e-5),
)


def run_suite(seed=0, report=None):
    """Run every registered check; returns {name: (max_err, threshold)}."""
    results = {}
    for idx, (name, check, trials, threshold) in enumerate(SUITE):
        rng = np.random.default_rng(np.random.SeedSequence([seed, idx]))
        worst = 0.0
        for _ in range(trials):
            worst = max(worst, check(rng))
        results[name] = (worst, threshold)
        if report is not None:
            status = "ok" if worst < threshold else "FAIL"
            report(f"{name:<16} max_rel_err={worst:.3e} "
                   f"(threshold {threshold:.0e}) {status}")
    return results
