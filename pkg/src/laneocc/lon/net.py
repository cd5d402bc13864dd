"""The occupancy network and its differentiable building blocks.

Everything is plain float64 numpy with hand-written backward passes:
strided 3x3 convolutions over the scene raster, a projection of the 1D
actor/path features into the latent 2D space (dense -> reshape -> 1x1
conv) added directly onto the scene features, a second conv block, and a
fully connected head ending in per-cell sigmoid probabilities.

Forward passes are pure functions of (weights, input) and reentrant;
training mutates only its own model instance.
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .config import ACTOR_FEATURE_DIM, PATH_FEATURE_DIM, LonConfig


# ---------------------------------------------------------------------------
# primitive layers


def _im2col(x: np.ndarray, k: int, stride: int, pad: int):
    B, C, H, W = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    Hp, Wp = x.shape[2], x.shape[3]
    Ho = (Hp - k) // stride + 1
    Wo = (Wp - k) // stride + 1
    s = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x, shape=(B, C, Ho, Wo, k, k),
        strides=(s[0], s[1], s[2] * stride, s[3] * stride, s[2], s[3]))
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(B, C * k * k, Ho * Wo)
    return np.ascontiguousarray(cols), (Ho, Wo, Hp, Wp)


def _col2im(dcols: np.ndarray, x_shape, k: int, stride: int, pad: int):
    B, C, H, W = x_shape
    Hp, Wp = H + 2 * pad, W + 2 * pad
    Ho = (Hp - k) // stride + 1
    Wo = (Wp - k) // stride + 1
    dx = np.zeros((B, C, Hp, Wp))
    d6 = dcols.reshape(B, C, k, k, Ho, Wo)
    for i in range(k):
        for j in range(k):
            dx[:, :, i:i + Ho * stride:stride, j:j + Wo * stride:stride] += d6[:, :, i, j]
    if pad:
        dx = dx[:, :, pad:-pad, pad:-pad]
    return dx


def conv_forward(x, W, b, stride=1, pad=0):
    Co, Ci, k, _ = W.shape
    cols, (Ho, Wo, _, _) = _im2col(x, k, stride, pad)
    y = np.einsum("of,bfn->bon", W.reshape(Co, -1), cols) + b[None, :, None]
    return y.reshape(x.shape[0], Co, Ho, Wo), (x.shape, cols, W, stride, pad)


def conv_backward(dy, cache):
    x_shape, cols, W, stride, pad = cache
    Co = W.shape[0]
    k = W.shape[2]
    dyf = dy.reshape(dy.shape[0], Co, -1)
    dW = np.einsum("bon,bfn->of", dyf, cols).reshape(W.shape)
    db = dyf.sum(axis=(0, 2))
    dcols = np.einsum("of,bon->bfn", W.reshape(Co, -1), dyf)
    dx = _col2im(dcols, x_shape, k, stride, pad)
    return dx, dW, db


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy, mask):
    return dy * mask


def dense_forward(x, W, b):
    return x @ W.T + b, (x, W)


def dense_backward(dy, cache):
    x, W = cache
    return dy @ W, dy.T @ x, dy.sum(axis=0)


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def masked_sigmoid_ce(logits: np.ndarray, labels: np.ndarray):
    """Mean sigmoid cross-entropy over cells labeled 0/1; -1 cells are
    ignored. Per sample the mean runs over its own valid cells (a sample
    with none contributes zero loss and zero gradient); the batch loss is
    the mean over samples. Returns (loss, dloss/dlogits)."""
    labels = np.asarray(labels)
    valid = labels >= 0
    y = np.where(valid, labels, 0).astype(float)
    # stable softplus(x) - y*x
    per_cell = np.maximum(logits, 0.0) - logits * y + np.log1p(np.exp(-np.abs(logits)))
    n_valid = valid.sum(axis=1)
    safe_n = np.maximum(n_valid, 1)
    per_sample = (per_cell * valid).sum(axis=1) / safe_n
    B = logits.shape[0]
    loss = float(per_sample.mean())
    dlogits = (sigmoid(logits) - y) * valid / safe_n[:, None] / B
    return loss, dlogits


# ---------------------------------------------------------------------------
# model


class LonModel:
    """Weights plus configuration; `params` is an ordered name -> array
    mapping whose insertion order is the serialization order."""

    def __init__(self, config: LonConfig, params: dict):
        self.config = config
        self.params = params
        expected = [name for name, _ in iter_param_shapes(config)]
        if list(params.keys()) != expected:
            raise ValidationError("model parameters do not match the config layout")

    def copy(self) -> "LonModel":
        return LonModel(self.config, {k: v.copy() for k, v in self.params.items()})


def latent_hw(cfg: LonConfig) -> tuple:
    h = cfg.raster_size
    for _ in cfg.conv1_channels:
        h = (h + 2 - 3) // 2 + 1  # 3x3, stride 2, pad 1
    return h, h


def iter_param_shapes(cfg: LonConfig):
    """(name, shape) pairs in canonical order."""
    feat_dim = ACTOR_FEATURE_DIM + PATH_FEATURE_DIM
    h, w = latent_hw(cfg)
    c_latent = cfg.conv1_channels[-1]
    prev = 3
    for i, ch in enumerate(cfg.conv1_channels):
        yield f"conv1.{i}.W", (ch, prev, 3, 3)
        yield f"conv1.{i}.b", (ch,)
        prev = ch
    yield "proj.fc.W", (cfg.proj_channels * h * w, feat_dim)
    yield "proj.fc.b", (cfg.proj_channels * h * w,)
    yield "proj.conv.W", (c_latent, cfg.proj_channels, 1, 1)
    yield "proj.conv.b", (c_latent,)
    prev = c_latent
    for i, ch in enumerate(cfg.conv2_channels):
        yield f"conv2.{i}.W", (ch, prev, 3, 3)
        yield f"conv2.{i}.b", (ch,)
        prev = ch
    prev_width = prev * h * w
    for i, width in enumerate(cfg.fc_widths):
        yield f"head.{i}.W", (width, prev_width)
        yield f"head.{i}.b", (width,)
        prev_width = width
    yield "head.out.W", (cfg.num_cells, prev_width)
    yield "head.out.b", (cfg.num_cells,)


def init_model(cfg: LonConfig, rng=None) -> LonModel:
    """Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    params = {}
    for name, shape in iter_param_shapes(cfg):
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
            continue
        if len(shape) == 4:
            fan_in = shape[1] * shape[2] * shape[3]
            fan_out = shape[0] * shape[2] * shape[3]
        else:
            fan_in, fan_out = shape[1], shape[0]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-bound, bound, size=shape)
    return LonModel(cfg, params)


def zero_model(cfg: LonConfig) -> LonModel:
    return LonModel(cfg, {name: np.zeros(shape) for name, shape in iter_param_shapes(cfg)})


def forward_logits(model: LonModel, rasters, actor, path, want_cache=False):
    """Batched forward pass to pre-sigmoid logits (B, L)."""
    cfg = model.config
    p = model.params
    caches = [] if want_cache else None
    z = np.asarray(rasters, dtype=float)
    if z.ndim != 4 or z.shape[1:] != (3, cfg.raster_size, cfg.raster_size):
        raise ValidationError("raster batch has the wrong shape")
    feats = np.concatenate([np.asarray(actor, float), np.asarray(path, float)], axis=1)

    def record(kind, name, cache):
        if caches is not None:
            caches.append((kind, name, cache))

    for i in range(len(cfg.conv1_channels)):
        z, c = conv_forward(z, p[f"conv1.{i}.W"], p[f"conv1.{i}.b"], stride=2, pad=1)
        record("conv", f"conv1.{i}", c)
        z, m = relu_forward(z)
        record("relu", None, m)

    B, C, h, w = z.shape
    u, c = dense_forward(feats, p["proj.fc.W"], p["proj.fc.b"])
    record("dense", "proj.fc", c)
    u = u.reshape(B, cfg.proj_channels, h, w)
    u, c = conv_forward(u, p["proj.conv.W"], p["proj.conv.b"], stride=1, pad=0)
    record("conv", "proj.conv", c)
    z = z + u  # fuse projected features into the scene features

    for i in range(len(cfg.conv2_channels)):
        z, c = conv_forward(z, p[f"conv2.{i}.W"], p[f"conv2.{i}.b"], stride=1, pad=1)
        record("conv", f"conv2.{i}", c)
        z, m = relu_forward(z)
        record("relu", None, m)

    v = z.reshape(B, -1)
    for i in range(len(cfg.fc_widths)):
        v, c = dense_forward(v, p[f"head.{i}.W"], p[f"head.{i}.b"])
        record("dense", f"head.{i}", c)
        v, m = relu_forward(v)
        record("relu", None, m)
    logits, c = dense_forward(v, p["head.out.W"], p["head.out.b"])
    record("dense", "head.out", c)
    return (logits, caches) if want_cache else logits


def backward_pass(model: LonModel, caches, dlogits):
    """Gradients for every parameter given d(loss)/d(logits)."""
    cfg = model.config
    grads = {}
    idx = len(caches) - 1

    # head.out dense
    kind, name, cache = caches[idx]
    g, grads["head.out.W"], grads["head.out.b"] = dense_backward(dlogits, cache)
    idx -= 1

    # fc stack (relu + dense pairs, reversed)
    for i in reversed(range(len(cfg.fc_widths))):
        kind, _, mask = caches[idx]
        g = relu_backward(g, mask)
        idx -= 1
        _, _, cache = caches[idx]
        g, grads[f"head.{i}.W"], grads[f"head.{i}.b"] = dense_backward(g, cache)
        idx -= 1

    # unflatten into the conv2 output
    h, w = latent_hw(cfg)
    c_out = cfg.conv2_channels[-1] if cfg.conv2_channels else cfg.conv1_channels[-1]
    g = g.reshape(g.shape[0], c_out, h, w)

    for i in reversed(range(len(cfg.conv2_channels))):
        _, _, mask = caches[idx]
        g = relu_backward(g, mask)
        idx -= 1
        _, _, cache = caches[idx]
        g, grads[f"conv2.{i}.W"], grads[f"conv2.{i}.b"] = conv_backward(g, cache)
        idx -= 1

    # fusion add: gradient splits identically into both branches
    _, _, cache = caches[idx]  # proj.conv
    gu, grads["proj.conv.W"], grads["proj.conv.b"] = conv_backward(g, cache)
    idx -= 1
    _, _, cache = caches[idx]  # proj.fc
    gu = gu.reshape(gu.shape[0], -1)
    _, grads["proj.fc.W"], grads["proj.fc.b"] = dense_backward(gu, cache)
    idx -= 1

    for i in reversed(range(len(cfg.conv1_channels))):
        _, _, mask = caches[idx]
        g = relu_backward(g, mask)
        idx -= 1
        _, _, cache = caches[idx]
        g, grads[f"conv1.{i}.W"], grads[f"conv1.{i}.b"] = conv_backward(g, cache)
        idx -= 1
    return grads


def lon_forward(model: LonModel, bundle) -> np.ndarray:
    """Per-cell occupancy probabilities (L,) for one FeatureBundle."""
    logits = forward_logits(model, bundle.raster[None], bundle.actor[None],
                            bundle.path[None])
    return sigmoid(logits[0])


def lon_forward_batch(model: LonModel, rasters, actor, path) -> np.ndarray:
    return sigmoid(forward_logits(model, rasters, actor, path))


def lon_loss(probabilities: np.ndarray, labels) -> float:
    """Mean sigmoid cross-entropy over the cells labeled 0/1; cells
    labeled -1 are ignored (0 when every cell is ignored)."""
    p = np.asarray(probabilities, dtype=float)
    lab = labels.labels if hasattr(labels, "labels") else np.asarray(labels)
    valid = lab >= 0
    if not valid.any():
        return 0.0
    y = lab[valid].astype(float)
    q = np.clip(p[valid], 1e-12, 1.0 - 1e-12)
    return float(np.mean(-(y * np.log(q) + (1.0 - y) * np.log(1.0 - q))))
