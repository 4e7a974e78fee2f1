"""Minimal dense-tensor CNN kernels: layers, losses, SGD with momentum.

Everything is plain numpy. Convolution is im2col plus one matmul per batch;
backward passes are exact reverse-mode gradients, checkable against central
finite differences via gradient_check(). float64 is the reference precision
(all numeric tests run in it); float32 is accepted for faster training runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteInput, ShapeMismatch, UnknownLayer


@dataclass(frozen=True)
class Conv2d:
    out_channels: int
    kernel: int
    stride: int = 1
    pad: int = 0
    name: str = ""


@dataclass(frozen=True)
class Relu:
    name: str = ""


@dataclass(frozen=True)
class MaxPool2d:
    window: int
    stride: int = 0  # 0 means stride == window
    name: str = ""

    @property
    def step(self):
        return self.stride if self.stride else self.window


@dataclass(frozen=True)
class Dense:
    out_dim: int
    name: str = ""


@dataclass(frozen=True)
class Flatten:
    name: str = ""


_LAYER_TAGS = {Conv2d: "conv2d", Relu: "relu", MaxPool2d: "maxpool2d", Dense: "dense", Flatten: "flatten"}
_TAG_TYPES = {v: k for k, v in _LAYER_TAGS.items()}


@dataclass(frozen=True)
class NetSpec:
    """An ordered feed-forward architecture over (C, H, W) inputs.

    aliases maps alternative feature-layer names onto canonical layer names,
    so callers can ask for a familiar probe point without knowing the exact
    layer naming of this architecture.
    """

    in_shape: tuple
    layers: tuple
    aliases: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "in_shape", tuple(self.in_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.in_shape) != 3:
            raise ShapeMismatch(f"in_shape must be (C, H, W), got {self.in_shape}")
        if not self.layers:
            raise ShapeMismatch("a net needs at least one layer")
        names = self.layer_names()
        if len(set(names)) != len(names):
            raise ShapeMismatch(f"duplicate layer names: {names}")
        self.shapes()  # validates layer compatibility

    def layer_names(self):
        """Explicit names where given, else type-indexed defaults (conv1, ...)."""
        counters = {}
        names = []
        for layer in self.layers:
            if layer.name:
                names.append(layer.name)
                continue
            base = {"conv2d": "conv", "maxpool2d": "pool", "dense": "fc"}.get(
                _LAYER_TAGS[type(layer)], _LAYER_TAGS[type(layer)]
            )
            counters[base] = counters.get(base, 0) + 1
            names.append(f"{base}{counters[base]}")
        return names

    def shapes(self):
        """Output shape (without batch axis) after each layer."""
        shape = self.in_shape
        out = []
        for layer in self.layers:
            if isinstance(layer, Conv2d):
                if len(shape) != 3:
                    raise ShapeMismatch(f"conv2d needs a (C, H, W) input, got {shape}")
                c, h, w = shape
                oh = (h + 2 * layer.pad - layer.kernel) // layer.stride + 1
                ow = (w + 2 * layer.pad - layer.kernel) // layer.stride + 1
                if oh < 1 or ow < 1:
                    raise ShapeMismatch(f"conv kernel {layer.kernel} too large for input {shape}")
                shape = (layer.out_channels, oh, ow)
            elif isinstance(layer, MaxPool2d):
                if len(shape) != 3:
                    raise ShapeMismatch(f"maxpool2d needs a (C, H, W) input, got {shape}")
                c, h, w = shape
                oh = (h - layer.window) // layer.step + 1
                ow = (w - layer.window) // layer.step + 1
                if oh < 1 or ow < 1:
                    raise ShapeMismatch(f"pool window {layer.window} too large for input {shape}")
                shape = (c, oh, ow)
            elif isinstance(layer, Flatten):
                shape = (int(np.prod(shape)),)
            elif isinstance(layer, Dense):
                if len(shape) != 1:
                    raise ShapeMismatch(f"dense needs a flat input, got {shape} (add flatten)")
                shape = (layer.out_dim,)
            elif isinstance(layer, Relu):
                pass
            else:
                raise ShapeMismatch(f"unknown layer type {type(layer).__name__}")
            out.append(shape)
        if len(out[-1]) != 1:
            raise ShapeMismatch(f"final layer must produce a flat output, got {out[-1]}")
        return out

    @property
    def out_dim(self):
        return self.shapes()[-1][0]

    def resolve_layer(self, name):
        canonical = self.aliases.get(name, name)
        names = self.layer_names()
        if canonical not in names:
            known = sorted(set(names) | set(self.aliases))
            raise UnknownLayer(f"no layer named {name!r}; known: {', '.join(known)}")
        return names.index(canonical)

    def to_dict(self):
        layers = []
        for layer in self.layers:
            entry = {"type": _LAYER_TAGS[type(layer)]}
            for key, value in layer.__dict__.items():
                if key != "name" or value:
                    entry[key] = value
            layers.append(entry)
        return {"in_shape": list(self.in_shape), "layers": layers, "aliases": dict(self.aliases)}

    @classmethod
    def from_dict(cls, obj):
        layers = []
        for entry in obj["layers"]:
            entry = dict(entry)
            tag = entry.pop("type")
            if tag not in _TAG_TYPES:
                raise ShapeMismatch(f"unknown layer type {tag!r}")
            layers.append(_TAG_TYPES[tag](**entry))
        return cls(
            in_shape=tuple(obj["in_shape"]),
            layers=tuple(layers),
            aliases=dict(obj.get("aliases", {})),
        )


def tiny_topic_net(k, in_shape=(3, 32, 32)):
    """The bundled reference architecture: two conv/pool stages and two dense
    layers ending in k logits. pool2 plays the "mid-level features" role and
    fc1 the "high-level features" role of much larger classification nets,
    hence the pool5/fc7 aliases."""
    return NetSpec(
        in_shape=in_shape,
        layers=(
            Conv2d(16, 3, stride=1, pad=1),
            Relu(),
            MaxPool2d(2),
            Conv2d(32, 3, stride=1, pad=1),
            Relu(),
            MaxPool2d(2),
            Flatten(),
            Dense(128),
            Relu(),
            Dense(k),
        ),
        aliases={"pool5": "pool2", "fc7": "fc1"},
    )


@dataclass
class LayerParams:
    weight: np.ndarray
    bias: np.ndarray
    weight_momentum: np.ndarray
    bias_momentum: np.ndarray


@dataclass(frozen=True)
class SgdConfig:
    """Stepped-decay SGD with classical momentum.

    lr(iter) = base_lr * lr_decay ** floor(iter / lr_step). The defaults are
    the training constants this project standardizes on: base rate 1e-3
    decayed by 0.1 every 50k iterations, momentum 0.9, batches of 64.
    """

    base_lr: float = 0.001
    lr_decay: float = 0.1
    lr_step: int = 50_000
    momentum: float = 0.9
    batch_size: int = 64
    max_iters: int = 120_000

    def __post_init__(self):
        if self.base_lr <= 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("base_lr must be positive and lr_decay in (0, 1]")
        if self.lr_step < 1 or self.batch_size < 1 or self.max_iters < 0:
            raise ValueError("lr_step and batch_size must be >= 1, max_iters >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")


def fine_tune_config(**overrides):
    """Default schedule for fine-tuning: 1e-4 base rate, 0.1 decay every 30k."""
    cfg = {"base_lr": 0.0001, "lr_step": 30_000, "max_iters": 60_000}
    cfg.update(overrides)
    return SgdConfig(**cfg)


def learning_rate(cfg, iteration):
    if iteration < 0:
        raise ValueError(f"iteration must be >= 0, got {iteration}")
    return cfg.base_lr * cfg.lr_decay ** (iteration // cfg.lr_step)


def init_params(spec, seed, dtype=np.float64):
    """He-style fan-in scaled uniform weights, zero biases, zero momentum.

    Weights are drawn from U(-sqrt(6/fan_in), sqrt(6/fan_in)), which has
    standard deviation sqrt(2/fan_in). Layers are visited in declaration
    order with a single seeded generator, so a seed pins every tensor.
    """
    rng = np.random.default_rng(seed)
    params = []
    shape = spec.in_shape
    for layer, out_shape in zip(spec.layers, spec.shapes()):
        if isinstance(layer, Conv2d):
            fan_in = shape[0] * layer.kernel * layer.kernel
            limit = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-limit, limit, size=(layer.out_channels, shape[0], layer.kernel, layer.kernel))
            b = np.zeros(layer.out_channels)
            params.append(
                LayerParams(
                    w.astype(dtype), b.astype(dtype), np.zeros_like(w, dtype=dtype), np.zeros_like(b, dtype=dtype)
                )
            )
        elif isinstance(layer, Dense):
            fan_in = shape[0]
            limit = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-limit, limit, size=(layer.out_dim, fan_in))
            b = np.zeros(layer.out_dim)
            params.append(
                LayerParams(
                    w.astype(dtype), b.astype(dtype), np.zeros_like(w, dtype=dtype), np.zeros_like(b, dtype=dtype)
                )
            )
        else:
            params.append(None)
        shape = out_shape
    return params


def copy_params(params):
    return [
        None
        if p is None
        else LayerParams(p.weight.copy(), p.bias.copy(), p.weight_momentum.copy(), p.bias_momentum.copy())
        for p in params
    ]


def params_equal(a, b):
    for pa, pb in zip(a, b):
        if (pa is None) != (pb is None):
            return False
        if pa is None:
            continue
        if not (
            np.array_equal(pa.weight, pb.weight)
            and np.array_equal(pa.bias, pb.bias)
            and np.array_equal(pa.weight_momentum, pb.weight_momentum)
            and np.array_equal(pa.bias_momentum, pb.bias_momentum)
        ):
            return False
    return True


def _im2col(x, kernel, stride):
    # x is already padded. Returns (B, OH*OW, C*kernel*kernel) patch matrix.
    windows = np.lib.stride_tricks.sliding_window_view(x, (kernel, kernel), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride, :, :]
    b, c, oh, ow = windows.shape[:4]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b, oh * ow, c * kernel * kernel)
    return np.ascontiguousarray(cols), oh, ow


def _conv_forward(x, layer, w, bias):
    if layer.pad:
        x = np.pad(x, ((0, 0), (0, 0), (layer.pad, layer.pad), (layer.pad, layer.pad)))
    cols, oh, ow = _im2col(x, layer.kernel, layer.stride)
    w_flat = w.reshape(layer.out_channels, -1)
    out = cols @ w_flat.T + bias
    out = out.transpose(0, 2, 1).reshape(x.shape[0], layer.out_channels, oh, ow)
    return out, (cols, x.shape, oh, ow)


def _conv_backward(grad, layer, w, cache):
    cols, padded_shape, oh, ow = cache
    b = grad.shape[0]
    g = grad.reshape(b, layer.out_channels, oh * ow)
    w_flat = w.reshape(layer.out_channels, -1)
    # both contractions as single GEMMs; einsum here falls off the BLAS path
    g_flat = np.ascontiguousarray(g.transpose(1, 0, 2)).reshape(layer.out_channels, -1)
    dw = (g_flat @ cols.reshape(-1, cols.shape[2])).reshape(w.shape)
    db = grad.sum(axis=(0, 2, 3))
    dcols = g.transpose(0, 2, 1) @ w_flat
    # Scatter patches back onto the padded input (col2im).
    dx = np.zeros(padded_shape, dtype=grad.dtype)
    k = layer.kernel
    s = layer.stride
    dpatches = dcols.reshape(b, oh, ow, padded_shape[1], k, k).transpose(0, 3, 4, 5, 1, 2)
    for i in range(k):
        for j in range(k):
            dx[:, :, i : i + s * oh : s, j : j + s * ow : s] += dpatches[:, :, i, j]
    if layer.pad:
        p = layer.pad
        dx = dx[:, :, p:-p, p:-p]
    return dx, dw, db


def _pool_forward(x, layer):
    w, s = layer.window, layer.step
    windows = np.lib.stride_tricks.sliding_window_view(x, (w, w), axis=(2, 3))[:, :, ::s, ::s]
    b, c, oh, ow = windows.shape[:4]
    flat = windows.reshape(b, c, oh, ow, w * w)
    arg = flat.argmax(axis=4)
    out = np.take_along_axis(flat, arg[..., None], axis=4)[..., 0]
    return out, (x.shape, arg, oh, ow)


def _pool_backward(grad, layer, cache):
    x_shape, arg, oh, ow = cache
    b, c = x_shape[:2]
    w, s = layer.window, layer.step
    dx = np.zeros(x_shape, dtype=grad.dtype)
    bi, ci, oi, oj = np.indices((b, c, oh, ow))
    rows = oi * s + arg // w
    cols = oj * s + arg % w
    np.add.at(dx, (bi, ci, rows, cols), grad)
    return dx


def forward(spec, params, batch):
    """Run the net on a (B, C, H, W) batch; returns (logits, cache).

    The cache holds each layer's input plus layer-local data, enough for both
    backward() and feature extraction (layer i's output is layer i+1's input).
    """
    batch = np.asarray(batch)
    if batch.ndim != 4 or batch.shape[1:] != spec.in_shape:
        raise ShapeMismatch(f"batch shape {batch.shape} does not match input {spec.in_shape}")
    x = batch
    layer_caches = []
    for layer, p in zip(spec.layers, params):
        if isinstance(layer, Conv2d):
            x, local = _conv_forward(x, layer, p.weight, p.bias)
        elif isinstance(layer, Relu):
            local = x > 0
            x = x * local
        elif isinstance(layer, MaxPool2d):
            x, local = _pool_forward(x, layer)
        elif isinstance(layer, Flatten):
            local = x.shape
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, Dense):
            local = x
            x = x @ p.weight.T + p.bias
        layer_caches.append((x, local))
    return x, (batch, layer_caches)


def layer_outputs(cache):
    """Per-layer outputs recorded by forward(), in layer order."""
    _, layer_caches = cache
    return [entry[0] for entry in layer_caches]


def backward(spec, params, cache, grad_logits):
    """Exact gradients of the loss w.r.t. every weight and bias.

    grad_logits is d(loss)/d(logits) as produced by the loss functions here.
    Returns a params-shaped list of (d_weight, d_bias) tuples (None for
    parameterless layers).
    """
    batch, layer_caches = cache
    grads = [None] * len(spec.layers)
    g = np.asarray(grad_logits)
    for i in range(len(spec.layers) - 1, -1, -1):
        layer = spec.layers[i]
        _, local = layer_caches[i]
        if isinstance(layer, Dense):
            inp = local
            dw = g.T @ inp
            db = g.sum(axis=0)
            grads[i] = (dw, db)
            g = g @ params[i].weight
        elif isinstance(layer, Flatten):
            g = g.reshape(local)
        elif isinstance(layer, Relu):
            g = g * local
        elif isinstance(layer, MaxPool2d):
            g = _pool_backward(g, layer, local)
        elif isinstance(layer, Conv2d):
            g, dw, db = _conv_backward(g, layer, params[i].weight, local)
            grads[i] = (dw, db)
    return grads


def sigmoid(x):
    # Evaluate each branch only where it is stable.
    x = np.asarray(x)
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_cross_entropy(logits, targets):
    """Numerically stable elementwise sigmoid cross-entropy.

    loss = mean over the batch of sum_k [max(x,0) - x*t + log(1 + exp(-|x|))],
    grad = (sigmoid(x) - t) / B. Targets may be soft (anywhere in [0, 1]).
    """
    logits = np.asarray(logits)
    targets = np.asarray(targets)
    if logits.shape != targets.shape:
        raise ShapeMismatch(f"logits {logits.shape} vs targets {targets.shape}")
    if not np.all(np.isfinite(logits)) or not np.all(np.isfinite(targets)):
        raise NonFiniteInput("logits and targets must be finite")
    if targets.min() < 0 or targets.max() > 1:
        raise ValueError("targets must lie in [0, 1]")
    b = logits.shape[0]
    elem = np.maximum(logits, 0.0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))
    loss = float(elem.sum() / b)
    grad = (sigmoid(logits) - targets) / b
    return loss, grad


def softmax_cross_entropy(logits, targets):
    """Softmax cross-entropy against (soft or one-hot) target rows.

    loss = mean over the batch of -sum_k t * log softmax(x),
    grad = (softmax(x) - t) / B.
    """
    logits = np.asarray(logits)
    targets = np.asarray(targets)
    if logits.shape != targets.shape:
        raise ShapeMismatch(f"logits {logits.shape} vs targets {targets.shape}")
    if not np.all(np.isfinite(logits)) or not np.all(np.isfinite(targets)):
        raise NonFiniteInput("logits and targets must be finite")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_softmax = shifted - log_z
    b = logits.shape[0]
    loss = float(-(targets * log_softmax).sum() / b)
    grad = (np.exp(log_softmax) - targets) / b
    return loss, grad


def sgd_step(params, grads, cfg, iteration):
    """One momentum update, in place: v <- m*v - lr*g; w <- w + v."""
    lr = learning_rate(cfg, iteration)
    for p, g in zip(params, grads):
        if p is None:
            continue
        dw, db = g
        p.weight_momentum *= cfg.momentum
        p.weight_momentum -= lr * dw
        p.weight += p.weight_momentum
        p.bias_momentum *= cfg.momentum
        p.bias_momentum -= lr * db
        p.bias += p.bias_momentum
    return params


def gradient_check(spec, params, batch, targets, epsilon=1e-5, loss="sigmoid", max_checks_per_tensor=None, seed=0):
    """Compare backward() against central finite differences.

    Returns the maximum relative error over all checked parameter entries,
    where rel(a, n) = |a - n| / max(|a|, |n|, 1e-3). The floor keeps finite-
    difference roundoff from dominating near-zero gradients. Set
    max_checks_per_tensor to sample large tensors instead of sweeping them.
    """
    loss_fn = {"sigmoid": sigmoid_cross_entropy, "softmax": softmax_cross_entropy}[loss]

    def eval_loss():
        logits, _ = forward(spec, params, batch)
        value, _ = loss_fn(logits, targets)
        return value

    logits, cache = forward(spec, params, batch)
    _, grad_logits = loss_fn(logits, targets)
    grads = backward(spec, params, cache, grad_logits)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, g in zip(params, grads):
        if p is None:
            continue
        for tensor, analytic in ((p.weight, g[0]), (p.bias, g[1])):
            flat = tensor.reshape(-1)
            n = flat.size
            if max_checks_per_tensor is not None and n > max_checks_per_tensor:
                idx = rng.choice(n, size=max_checks_per_tensor, replace=False)
            else:
                idx = range(n)
            a_flat = analytic.reshape(-1)
            for i in idx:
                orig = flat[i]
                flat[i] = orig + epsilon
                up = eval_loss()
                flat[i] = orig - epsilon
                down = eval_loss()
                flat[i] = orig
                numeric = (up - down) / (2 * epsilon)
                rel = abs(a_flat[i] - numeric) / max(abs(a_flat[i]), abs(numeric), 1e-3)
                worst = max(worst, rel)
    return worst
