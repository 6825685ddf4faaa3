"""Minimal reverse-mode-differentiable convolutional classifier and SGD.

Everything runs on numpy arrays, NHWC layout. Convolutions lower to
im2col + matrix multiply, so the accumulation order is the BLAS dot-product
order: runs are bit-reproducible for a fixed BLAS thread count. There is no
batch normalization anywhere, by design.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GraphError",
    "NonFiniteError",
    "Tensor",
    "relu",
    "conv3x3",
    "maxpool2",
    "flatten",
    "dense",
    "scale",
    "cross_entropy",
    "backward",
    "SmallConvNet",
    "TrainRecipe",
    "learning_rate",
    "SgdState",
    "sgd_step",
    "top1_error",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_VERSION = 1

# When enabled, every tensor creation verifies the values are finite.
# Off by default (it costs a full pass per op); the training loop always
# checks the loss scalar.
strict_finite = False


class GraphError(RuntimeError):
    """Backward/step invoked without the state it needs."""


class NonFiniteError(FloatingPointError):
    """NaN or Inf appeared in tensor values."""


class Tensor:
    """Array node in the reverse-mode graph."""

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, values, requires_grad=False, _parents=(), _backward_fn=None):
        self.values = np.asarray(values)
        if strict_finite and not np.all(np.isfinite(self.values)):
            raise NonFiniteError("tensor contains NaN or Inf")
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward_fn = _backward_fn

    @property
    def shape(self):
        return self.values.shape

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, grad={self.grad is not None})"


def _op(values, parents, backward_fn):
    return Tensor(values, _parents=parents, _backward_fn=backward_fn)


def backward(loss: Tensor) -> None:
    """Populate .grad on every reachable requires_grad tensor."""
    if not loss._parents:
        raise GraphError("backward called without a recorded forward")
    if loss.values.size != 1:
        raise GraphError(f"loss must be scalar, got shape {loss.values.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    loss.grad = np.ones_like(loss.values)
    for node in reversed(order):
        if node._backward_fn is None or node.grad is None:
            continue
        for parent, grad in zip(node._parents, node._backward_fn(node.grad)):
            if parent.requires_grad and grad is not None:
                parent.grad = grad if parent.grad is None else parent.grad + grad


# ---------------------------------------------------------------------------
# Forward math (shared by the recording ops and the no-grad predict path)


_OFFSETS3 = [(ky, kx) for ky in range(3) for kx in range(3)]

# Inputs with few channels lower to one wide im2col GEMM; wider inputs run
# nine shifted GEMMs straight off the padded array, which skips the large
# column copy. The split is purely a speed choice; either path is exact and
# the choice is fixed by the architecture, keeping runs reproducible.
_IM2COL_MAX_CHANNELS = 8


def _im2col3(x: np.ndarray) -> np.ndarray:
    """(N, H, W, C) -> (N*H*W, 9*C) patches of the zero-padded input.

    Row order (ky, kx, c) matches a (3, 3, C_in, C_out) kernel reshaped to
    (9*C_in, C_out).
    """
    n, h, w, c = x.shape
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((n, h, w, 9, c), dtype=x.dtype)
    for k, (ky, kx) in enumerate(_OFFSETS3):
        cols[:, :, :, k, :] = padded[:, ky : ky + h, kx : kx + w, :]
    return cols.reshape(n * h * w, 9 * c)


def _conv3x3_fwd(x, w, b):
    n, h, wd, c = x.shape
    c_out = w.shape[3]
    if c <= _IM2COL_MAX_CHANNELS:
        cache = _im2col3(x)
        out = cache @ w.reshape(-1, c_out)
    else:
        padded = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        cache = []
        out = None
        for ky, kx in _OFFSETS3:
            sl = np.ascontiguousarray(
                padded[:, ky : ky + h, kx : kx + wd, :]
            ).reshape(-1, c)
            cache.append(sl)
            part = sl @ w[ky, kx]
            out = part if out is None else out + part
    out += b
    return out.reshape(n, h, wd, c_out), cache


def _conv3x3_weight_grad(cache, g_mat, w_shape, x_shape):
    if x_shape[3] <= _IM2COL_MAX_CHANNELS:
        return (cache.T @ g_mat).reshape(w_shape)
    gw = np.empty(w_shape, dtype=g_mat.dtype)
    for sl, (ky, kx) in zip(cache, _OFFSETS3):
        gw[ky, kx] = sl.T @ g_mat
    return gw


def _conv3x3_input_grad(g, w, x_shape):
    """Scatter-add form of the transposed convolution: nine GEMMs into the
    padded gradient buffer, fixed accumulation order."""
    n, h, wd, c_in = x_shape
    c_out = w.shape[3]
    g_mat = g.reshape(-1, c_out)
    padded = np.zeros((n, h + 2, wd + 2, c_in), dtype=g.dtype)
    for ky, kx in _OFFSETS3:
        contrib = g_mat @ w[ky, kx].T
        padded[:, ky : ky + h, kx : kx + wd, :] += contrib.reshape(n, h, wd, c_in)
    return padded[:, 1 : 1 + h, 1 : 1 + wd, :]


def _maxpool2_fwd(x):
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    q = x.reshape(n, h // 2, 2, w // 2, 2, c)
    q0, q1, q2, q3 = q[:, :, 0, :, 0], q[:, :, 0, :, 1], q[:, :, 1, :, 0], q[:, :, 1, :, 1]
    # pairwise maxima with strict > so ties route to the lowest quad index,
    # matching argmax-first semantics
    i01 = q1 > q0
    m01 = np.where(i01, q1, q0)
    i23 = q3 > q2
    m23 = np.where(i23, q3, q2)
    hi = m23 > m01
    out = np.where(hi, m23, m01)
    idx = np.where(hi, i23.astype(np.int8) + 2, i01.astype(np.int8))
    return out, idx


def _dense_fwd(x, w, b):
    return x @ w + b


# ---------------------------------------------------------------------------
# Recording ops


def conv3x3(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """3x3 stride-1 convolution with zero same-padding, NHWC."""
    if x.values.ndim != 4 or x.values.shape[3] != w.values.shape[2]:
        raise ValueError(
            f"conv3x3 shape mismatch: input {x.values.shape}, kernel {w.values.shape}"
        )
    out, cache = _conv3x3_fwd(x.values, w.values, b.values)
    n, h, wd, c_out = out.shape

    def back(g):
        g_mat = g.reshape(-1, c_out)
        gw = _conv3x3_weight_grad(g_mat=g_mat, cache=cache,
                                  w_shape=w.values.shape, x_shape=x.values.shape)
        gb = g_mat.sum(axis=0)
        gx = (
            _conv3x3_input_grad(g, w.values, x.values.shape)
            if x.requires_grad
            else None
        )
        return gx, gw, gb

    return _op(out, (x, w, b), back)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.values, 0)

    def back(g):
        return (g * (x.values > 0),)

    return _op(out, (x,), back)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; ties route to the first position."""
    out, idx = _maxpool2_fwd(x.values)
    n, h2, w2, c = out.shape

    def back(g):
        gx = np.zeros((n, h2, 2, w2, 2, c), dtype=g.dtype)
        for k in range(4):
            gx[:, :, k // 2, :, k % 2] = np.where(idx == k, g, 0)
        return (gx.reshape(x.values.shape),)

    return _op(out, (x,), back)


def flatten(x: Tensor) -> Tensor:
    n = x.values.shape[0]
    out = x.values.reshape(n, -1)

    def back(g):
        return (g.reshape(x.values.shape),)

    return _op(out, (x,), back)


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    out = _dense_fwd(x.values, w.values, b.values)

    def back(g):
        return g @ w.values.T, x.values.T @ g, g.sum(axis=0)

    return _op(out, (x, w, b), back)


def scale(x: Tensor, alpha: float) -> Tensor:
    def back(g):
        return (g * alpha,)

    return _op(x.values * alpha, (x,), back)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log softmax probability of the true class.

    Stabilized by max-subtraction; safe for logit magnitudes up to ~1e300.
    """
    labels = np.asarray(labels)
    v = logits.values
    n, k = v.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    shifted = v - v.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    log_prob = shifted - np.log(total)
    rows = np.arange(n)
    loss = -log_prob[rows, labels].mean()

    def back(g):
        soft = exp / total
        soft[rows, labels] -= 1.0
        return (soft * (g / n),)

    return _op(np.asarray(loss), (logits,), back)


# ---------------------------------------------------------------------------
# Model


@dataclass
class _ParamSpec:
    name: str
    shape: tuple[int, ...]
    fan_in: int | None  # None: zero-initialized (biases)


class SmallConvNet:
    """conv3x3(C->32) relu pool2 conv3x3(32->64) relu pool2 dense(->128) relu dense(->classes).

    Weights draw from a fan-in-scaled uniform (+-sqrt(6/fan_in)); biases
    start at zero. Construction is fully determined by (seed, shape args).
    """

    def __init__(self, in_channels=3, num_classes=10, input_hw=(32, 32),
                 seed=0, dtype=np.float32):
        h, w = input_hw
        if h % 4 or w % 4:
            raise ValueError(f"input dims must be divisible by 4, got {h}x{w}")
        self.in_channels = in_channels
        self.num_classes = num_classes
        self.input_hw = (h, w)
        self.dtype = np.dtype(dtype)
        flat = (h // 4) * (w // 4) * 64
        specs = [
            _ParamSpec("conv1_w", (3, 3, in_channels, 32), 9 * in_channels),
            _ParamSpec("conv1_b", (32,), None),
            _ParamSpec("conv2_w", (3, 3, 32, 64), 9 * 32),
            _ParamSpec("conv2_b", (64,), None),
            _ParamSpec("fc1_w", (flat, 128), flat),
            _ParamSpec("fc1_b", (128,), None),
            _ParamSpec("fc2_w", (128, num_classes), 128),
            _ParamSpec("fc2_b", (num_classes,), None),
        ]
        rng = np.random.default_rng(seed)
        self.params: dict[str, Tensor] = {}
        for spec in specs:
            if spec.fan_in is None:
                values = np.zeros(spec.shape, dtype=self.dtype)
            else:
                bound = math.sqrt(6.0 / spec.fan_in)
                values = rng.uniform(-bound, bound, size=spec.shape).astype(self.dtype)
            self.params[spec.name] = Tensor(values, requires_grad=True)

    def _check_input(self, images: np.ndarray):
        expect = (self.input_hw[0], self.input_hw[1], self.in_channels)
        if images.ndim != 4 or images.shape[1:] != expect:
            raise ValueError(
                f"expected batch of shape (N, {expect[0]}, {expect[1]}, {expect[2]}), "
                f"got {images.shape}"
            )

    def forward(self, images: np.ndarray) -> Tensor:
        """Run the net and record the graph for a subsequent backward()."""
        self._check_input(images)
        p = self.params
        x = Tensor(np.asarray(images, dtype=self.dtype))
        x = relu(conv3x3(x, p["conv1_w"], p["conv1_b"]))
        x = maxpool2(x)
        x = relu(conv3x3(x, p["conv2_w"], p["conv2_b"]))
        x = maxpool2(x)
        x = flatten(x)
        x = relu(dense(x, p["fc1_w"], p["fc1_b"]))
        return dense(x, p["fc2_w"], p["fc2_b"])

    def predict(self, images: np.ndarray) -> np.ndarray:
        """Logits without recording a graph; same arithmetic as forward()."""
        self._check_input(images)
        p = {k: t.values for k, t in self.params.items()}
        x, _ = _conv3x3_fwd(np.asarray(images, dtype=self.dtype),
                            p["conv1_w"], p["conv1_b"])
        x, _ = _maxpool2_fwd(np.maximum(x, 0))
        x, _ = _conv3x3_fwd(x, p["conv2_w"], p["conv2_b"])
        x, _ = _maxpool2_fwd(np.maximum(x, 0))
        x = x.reshape(x.shape[0], -1)
        x = np.maximum(_dense_fwd(x, p["fc1_w"], p["fc1_b"]), 0)
        return _dense_fwd(x, p["fc2_w"], p["fc2_b"])

    def zero_grads(self):
        for t in self.params.values():
            t.grad = None

    def fill_missing_grads(self):
        """Parameters unreachable from the loss get an explicit zero gradient."""
        for t in self.params.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.values)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.values for name, t in self.params.items()}

    def load_state(self, arrays: dict[str, np.ndarray]):
        if set(arrays) != set(self.params):
            raise GraphError(
                f"checkpoint parameters {sorted(arrays)} do not match model "
                f"{sorted(self.params)}"
            )
        for name, t in self.params.items():
            src = arrays[name]
            if src.shape != t.values.shape:
                raise GraphError(
                    f"shape mismatch for {name}: {src.shape} vs {t.values.shape}"
                )
            t.values = src.astype(self.dtype)
            t.grad = None


# ---------------------------------------------------------------------------
# Optimizer


@dataclass
class TrainRecipe:
    """SGD hyperparameters. Defaults are conventional 32x32 practice."""

    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    schedule: str = "cosine"  # "cosine" or "constant"
    epochs: int = 50
    batch_size: int = 128

    def __post_init__(self):
        if self.schedule not in ("cosine", "constant"):
            raise ValueError(f"unknown lr schedule {self.schedule!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


def learning_rate(recipe: TrainRecipe, epoch: int) -> float:
    if recipe.schedule == "constant":
        return recipe.lr
    return recipe.lr * 0.5 * (1.0 + math.cos(math.pi * epoch / recipe.epochs))


@dataclass
class SgdState:
    momentum: float
    weight_decay: float
    velocities: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_model(cls, model: SmallConvNet, recipe: TrainRecipe) -> "SgdState":
        vel = {name: np.zeros_like(t.values) for name, t in model.params.items()}
        return cls(recipe.momentum, recipe.weight_decay, vel)


def sgd_step(model: SmallConvNet, state: SgdState, lr: float) -> None:
    """v <- mu*v + g + wd*W; W <- W - lr*v; gradients cleared."""
    for name, t in model.params.items():
        if t.grad is None:
            raise GraphError(f"sgd_step: parameter {name} has no gradient")
    for name, t in model.params.items():
        v = state.velocities[name]
        v *= state.momentum
        v += t.grad
        if state.weight_decay:
            v += state.weight_decay * t.values
        t.values = t.values - lr * v
        t.grad = None


def top1_error(model, dataset, batch_size: int = 512) -> float:
    """Fraction of records whose argmax logit misses the label.

    argmax breaks ties toward the lowest class index. ``model`` needs only a
    ``predict(images) -> logits`` method.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("empty dataset")
    wrong = 0
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        logits = model.predict(dataset.batch_float(idx).astype(np.float32))
        wrong += int(np.sum(np.argmax(logits, axis=1) != dataset.labels[idx]))
    return wrong / n


# ---------------------------------------------------------------------------
# Checkpoints: a flat versioned container (magic, digest, then name/dtype/
# shape/raw-bytes per parameter). Unlike zip-based formats it carries no
# timestamps, so identical parameters give identical files.

_CKPT_MAGIC = b"VACCKPT"


def save_checkpoint(model: SmallConvNet, path, config_digest: str = "") -> None:
    import struct

    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        digest_bytes = config_digest.encode()
        fh.write(struct.pack("<I", len(digest_bytes)))
        fh.write(digest_bytes)
        arrays = model.state_arrays()
        fh.write(struct.pack("<I", len(arrays)))
        for name, values in arrays.items():
            name_b = name.encode()
            dtype_b = values.dtype.str.encode()
            fh.write(struct.pack("<I", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<I", len(dtype_b)))
            fh.write(dtype_b)
            fh.write(struct.pack("<I", values.ndim))
            fh.write(struct.pack(f"<{values.ndim}q", *values.shape))
            fh.write(np.ascontiguousarray(values).tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], str]:
    import struct

    def read(fh, fmt):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, fh.read(size))

    with open(path, "rb") as fh:
        if fh.read(len(_CKPT_MAGIC)) != _CKPT_MAGIC:
            raise GraphError(f"{path} is not a checkpoint file")
        (version,) = read(fh, "<H")
        if version != CHECKPOINT_VERSION:
            raise GraphError(f"unsupported checkpoint version {version}")
        (dlen,) = read(fh, "<I")
        digest = fh.read(dlen).decode()
        (count,) = read(fh, "<I")
        params: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = read(fh, "<I")
            name = fh.read(nlen).decode()
            (tlen,) = read(fh, "<I")
            dtype = np.dtype(fh.read(tlen).decode())
            (ndim,) = read(fh, "<I")
            shape = read(fh, f"<{ndim}q")
            raw = fh.read(dtype.itemsize * int(np.prod(shape, dtype=np.int64)))
            params[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    return params, digest
