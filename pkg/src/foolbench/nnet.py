"""A small convolutional classifier with hand-written forward and backward passes.

The canonical stack is LeNet-like: conv 5x5x20 -> maxpool 2 -> conv 5x5x50 ->
maxpool 2 -> dense 500 -> relu -> dense num_classes -> softmax, on 28x28
inputs scaled to [0, 1]. Arbitrary conv/pool/relu/dense stacks are supported
so gradient checks can run on tiny models.

Everything is plain numpy; float32 in production, float64 for gradient-check
builds. A constructed model is immutable in practice (training is the single
writer) and safe to share across threads for forward/input-gradient calls.
"""

from dataclasses import dataclass

import json
import struct

import numpy as np

from .errors import DataError, FormatError, ShapeError


@dataclass(frozen=True)
class Conv:
    kernel: int
    out_channels: int
    stride: int = 1


@dataclass(frozen=True)
class MaxPool:
    window: int = 2
    stride: int = 2


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class Dense:
    width: int


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    weight_decay: float = 0.0005
    power: float = 0.75
    gamma: float = 0.0001
    max_steps: int = 10000
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise DataError("learning rate must be positive and batch size >= 1")


def learning_rate(cfg: TrainConfig, step: int) -> float:
    """Inverse decay policy: base * (1 + gamma * t) ** (-power)."""
    return cfg.learning_rate * (1.0 + cfg.gamma * step) ** (-cfg.power)


def _im2col(x, k, stride):
    n, h, w, c = x.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    s = x.strides
    view = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, oh, ow, k, k, c),
        strides=(s[0], s[1] * stride, s[2] * stride, s[1], s[2], s[3]),
    )
    return view.reshape(n, oh * ow, k * k * c), oh, ow


def _col2im(dcols, x_shape, k, stride, oh, ow):
    n, h, w, c = x_shape
    dx = np.zeros(x_shape, dtype=dcols.dtype)
    d6 = dcols.reshape(n, oh, ow, k, k, c)
    for i in range(k):
        for j in range(k):
            dx[:, i : i + oh * stride : stride, j : j + ow * stride : stride, :] += d6[
                :, :, :, i, j, :
            ]
    return dx


class ConvNetModel:
    """Layer stack plus parameters; built from descriptors, seeded weight init."""

    def __init__(self, input_shape, num_classes, layers, dtype=np.float32, seed=0):
        self.input_shape = tuple(int(v) for v in input_shape)
        self.num_classes = int(num_classes)
        self.layers = list(layers)
        self.dtype = np.dtype(dtype)
        self.seed = seed
        self.params = []
        rng = np.random.default_rng(seed)

        h, w, c = self.input_shape
        flat = None  # set once the stack switches to dense layers
        for layer in self.layers:
            if isinstance(layer, Conv):
                if flat is not None:
                    raise ShapeError("conv layer after a dense layer")
                k, s = layer.kernel, layer.stride
                if (h - k) % s or (w - k) % s or h < k or w < k:
                    raise ShapeError(
                        f"conv {k}x{k}/{s} does not tile a {h}x{w} input"
                    )
                fan_in = k * k * c
                fan_out = k * k * layer.out_channels
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                weight = rng.uniform(-limit, limit, size=(fan_in, layer.out_channels))
                self.params.append(
                    {
                        "W": weight.astype(self.dtype),
                        "b": np.zeros(layer.out_channels, dtype=self.dtype),
                    }
                )
                h = (h - k) // s + 1
                w = (w - k) // s + 1
                c = layer.out_channels
            elif isinstance(layer, MaxPool):
                if flat is not None:
                    raise ShapeError("pool layer after a dense layer")
                k, s = layer.window, layer.stride
                if (h - k) % s or (w - k) % s or h < k or w < k:
                    raise ShapeError(
                        f"pool {k}x{k}/{s} does not tile a {h}x{w} input"
                    )
                self.params.append(None)
                h = (h - k) // s + 1
                w = (w - k) // s + 1
            elif isinstance(layer, Relu):
                self.params.append(None)
            elif isinstance(layer, Dense):
                in_dim = flat if flat is not None else h * w * c
                limit = np.sqrt(6.0 / (in_dim + layer.width))
                weight = rng.uniform(-limit, limit, size=(in_dim, layer.width))
                self.params.append(
                    {
                        "W": weight.astype(self.dtype),
                        "b": np.zeros(layer.width, dtype=self.dtype),
                    }
                )
                flat = layer.width
            else:
                raise DataError(f"unknown layer descriptor {layer!r}")
        out_dim = flat if flat is not None else h * w * c
        if out_dim != self.num_classes:
            raise ShapeError(
                f"stack ends with {out_dim} units, model declares {self.num_classes} classes"
            )

    # -- forward / backward ------------------------------------------------

    def _run_forward(self, x, keep_cache):
        caches = []
        for layer, params in zip(self.layers, self.params):
            if isinstance(layer, Conv):
                cols, oh, ow = _im2col(x, layer.kernel, layer.stride)
                z = cols @ params["W"] + params["b"]
                caches.append((x.shape, cols, oh, ow) if keep_cache else None)
                x = z.reshape(x.shape[0], oh, ow, layer.out_channels)
            elif isinstance(layer, MaxPool):
                n, h, w, c = x.shape
                k, s = layer.window, layer.stride
                st = x.strides
                oh = (h - k) // s + 1
                ow = (w - k) // s + 1
                view = np.lib.stride_tricks.as_strided(
                    x,
                    shape=(n, oh, ow, k, k, c),
                    strides=(st[0], st[1] * s, st[2] * s, st[1], st[2], st[3]),
                )
                windows = view.transpose(0, 1, 2, 5, 3, 4).reshape(n, oh, ow, c, k * k)
                idx = windows.argmax(axis=-1)
                out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
                caches.append((x.shape, idx, oh, ow) if keep_cache else None)
                x = out
            elif isinstance(layer, Relu):
                mask = x > 0
                caches.append(mask if keep_cache else None)
                x = x * mask
            elif isinstance(layer, Dense):
                shape_in = x.shape
                xf = x.reshape(x.shape[0], -1)
                caches.append((shape_in, xf) if keep_cache else None)
                x = xf @ params["W"] + params["b"]
        return x, caches

    def _softmax(self, logits):
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def _check_batch(self, batch):
        batch = np.asarray(batch, dtype=self.dtype)
        if batch.ndim == 3:
            batch = batch[None]
        if batch.ndim != 4 or batch.shape[1:] != self.input_shape:
            raise ShapeError(
                f"batch shape {batch.shape} does not match input {self.input_shape}"
            )
        return batch

    def forward(self, batch) -> np.ndarray:
        """Per-class probabilities, one row per batch image; rows sum to 1."""
        batch = self._check_batch(batch)
        logits, _ = self._run_forward(batch, keep_cache=False)
        return self._softmax(logits)

    def _backprop(self, dlogits, caches, want_params):
        grads = [None] * len(self.layers)
        d = dlogits
        for i in range(len(self.layers) - 1, -1, -1):
            layer, params, cache = self.layers[i], self.params[i], caches[i]
            if isinstance(layer, Dense):
                shape_in, xf = cache
                if want_params:
                    grads[i] = {"W": xf.T @ d, "b": d.sum(axis=0)}
                d = (d @ params["W"].T).reshape(shape_in)
            elif isinstance(layer, Relu):
                d = d * cache
            elif isinstance(layer, MaxPool):
                x_shape, idx, oh, ow = cache
                n, h, w, c = x_shape
                k, s = layer.window, layer.stride
                dw = np.zeros((n, oh, ow, c, k * k), dtype=d.dtype)
                np.put_along_axis(dw, idx[..., None], d[..., None], axis=-1)
                d6 = dw.reshape(n, oh, ow, c, k, k).transpose(0, 1, 2, 4, 5, 3)
                d = _col2im(d6.reshape(n, oh * ow, k * k * c), x_shape, k, s, oh, ow)
            elif isinstance(layer, Conv):
                x_shape, cols, oh, ow = cache
                n = x_shape[0]
                dz = d.reshape(n, oh * ow, layer.out_channels)
                if want_params:
                    grads[i] = {
                        "W": np.einsum("npk,npo->ko", cols, dz),
                        "b": dz.sum(axis=(0, 1)),
                    }
                dcols = dz @ params["W"].T
                d = _col2im(dcols, x_shape, layer.kernel, layer.stride, oh, ow)
        return grads, d

    def backward(self, batch, labels):
        """Parameter gradients of the mean cross-entropy loss, plus the loss."""
        batch = self._check_batch(batch)
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if len(labels) != len(batch):
            raise ShapeError(f"{len(batch)} images but {len(labels)} labels")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DataError("label outside [0, num_classes)")
        logits, caches = self._run_forward(batch, keep_cache=True)
        n = len(batch)
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        loss = float(-log_probs[np.arange(n), labels].mean())
        dlogits = np.exp(log_probs)
        dlogits[np.arange(n), labels] -= 1.0
        dlogits /= n
        grads, _ = self._backprop(dlogits.astype(self.dtype), caches, want_params=True)
        return grads, loss

    def input_gradient(self, image, class_index: int) -> np.ndarray:
        """Gradient of the chosen class's softmax probability w.r.t. the pixels."""
        if not 0 <= class_index < self.num_classes:
            raise DataError(f"class {class_index} outside [0, {self.num_classes})")
        batch = self._check_batch(image)
        if len(batch) != 1:
            raise ShapeError("input_gradient takes a single image")
        logits, caches = self._run_forward(batch, keep_cache=True)
        p = self._softmax(logits)[0]
        # dp_c/dz_j = p_c * (delta_cj - p_j)
        dlogits = -p[class_index] * p
        dlogits[class_index] += p[class_index]
        _, dx = self._backprop(
            dlogits[None].astype(self.dtype), caches, want_params=False
        )
        return dx[0]


def lenet(num_classes=10, input_shape=(28, 28, 1), dtype=np.float32, seed=0) -> ConvNetModel:
    """The fixed production stack for 28x28 digit inputs."""
    layers = [
        Conv(5, 20),
        MaxPool(2, 2),
        Conv(5, 50),
        MaxPool(2, 2),
        Dense(500),
        Relu(),
        Dense(num_classes),
    ]
    return ConvNetModel(input_shape, num_classes, layers, dtype=dtype, seed=seed)


def train(model: ConvNetModel, ds, cfg: TrainConfig, val=None):
    """SGD with classical momentum, inverse LR decay, and multiplicative weight decay.

    Returns the (in-place trained) model and a per-epoch curve of mean batch
    loss plus validation error when ``val`` is given. Deterministic for a
    fixed seed at thread count 1.
    """
    if ds.num_classes != model.num_classes:
        raise DataError(
            f"dataset has {ds.num_classes} classes, model {model.num_classes}"
        )
    n = len(ds)
    if n == 0:
        raise DataError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    velocity = [
        None if p is None else {k: np.zeros_like(v) for k, v in p.items()}
        for p in model.params
    ]
    curve = []
    perm = rng.permutation(n)
    pos = 0
    epoch = 0
    epoch_losses = []

    def close_epoch():
        row = {"epoch": epoch, "mean_loss": float(np.mean(epoch_losses))}
        if val is not None:
            row["val_error"] = evaluate_error(model, val)
        curve.append(row)

    for step in range(cfg.max_steps):
        if pos + cfg.batch_size > n:
            if epoch_losses:
                close_epoch()
            perm = rng.permutation(n)
            pos = 0
            epoch += 1
            epoch_losses = []
        idx = perm[pos : pos + cfg.batch_size]
        pos += cfg.batch_size
        xb = ds.images[idx].astype(model.dtype) / 255.0
        yb = ds.labels[idx]
        lr = learning_rate(cfg, step)
        grads, loss = model.backward(xb, yb)
        epoch_losses.append(loss)
        for p, g, v in zip(model.params, grads, velocity):
            if p is None:
                continue
            for key in p:
                total = g[key] + cfg.weight_decay * p[key]
                v[key] *= cfg.momentum
                v[key] -= lr * total
                p[key] += v[key]
    if epoch_losses:
        close_epoch()
    return model, curve


def evaluate_error(model: ConvNetModel, ds, batch_size=256) -> float:
    """Top-1 error rate in [0, 1]."""
    if len(ds) == 0:
        raise DataError("cannot evaluate on an empty dataset")
    wrong = 0
    for start in range(0, len(ds), batch_size):
        xb = ds.images[start : start + batch_size].astype(model.dtype) / 255.0
        probs = model.forward(xb)
        pred = probs.argmax(axis=1)
        wrong += int((pred != ds.labels[start : start + batch_size]).sum())
    return wrong / len(ds)


# -- model file format ---------------------------------------------------

_MODEL_MAGIC = b"FBCN"
_MODEL_VERSION = 1

_LAYER_TAGS = {Conv: "conv", MaxPool: "pool", Relu: "relu", Dense: "dense"}


def _layer_to_json(layer):
    if isinstance(layer, Conv):
        return ["conv", layer.kernel, layer.out_channels, layer.stride]
    if isinstance(layer, MaxPool):
        return ["pool", layer.window, layer.stride]
    if isinstance(layer, Relu):
        return ["relu"]
    if isinstance(layer, Dense):
        return ["dense", layer.width]
    raise DataError(f"unknown layer {layer!r}")


def _layer_from_json(spec):
    tag = spec[0]
    if tag == "conv":
        return Conv(spec[1], spec[2], spec[3])
    if tag == "pool":
        return MaxPool(spec[1], spec[2])
    if tag == "relu":
        return Relu()
    if tag == "dense":
        return Dense(spec[1])
    raise FormatError(f"unknown layer tag {tag!r} in model file")


def save_model(model: ConvNetModel) -> bytes:
    """Serialize to bytes: magic, version, JSON header, little-endian blobs."""
    header = {
        "version": _MODEL_VERSION,
        "input_shape": list(model.input_shape),
        "num_classes": model.num_classes,
        "dtype": model.dtype.name,
        "seed": model.seed,
        "layers": [_layer_to_json(l) for l in model.layers],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    blobs = []
    for p in model.params:
        if p is None:
            continue
        for key in ("W", "b"):
            blobs.append(np.ascontiguousarray(p[key], dtype=model.dtype.newbyteorder("<")).tobytes())
    return _MODEL_MAGIC + struct.pack("<I", len(head)) + head + b"".join(blobs)


def load_model(data: bytes) -> ConvNetModel:
    if data[:4] != _MODEL_MAGIC:
        raise FormatError(f"bad model magic {data[:4]!r}")
    if len(data) < 8:
        raise FormatError("truncated model header")
    (head_len,) = struct.unpack("<I", data[4:8])
    head_end = 8 + head_len
    if len(data) < head_end:
        raise FormatError("truncated model header")
    header = json.loads(data[8:head_end].decode("utf-8"))
    if header.get("version") != _MODEL_VERSION:
        raise FormatError(f"unsupported model version {header.get('version')}")
    layers = [_layer_from_json(spec) for spec in header["layers"]]
    model = ConvNetModel(
        tuple(header["input_shape"]),
        header["num_classes"],
        layers,
        dtype=np.dtype(header["dtype"]),
        seed=header.get("seed", 0),
    )
    dtype = model.dtype.newbyteorder("<")
    offset = head_end
    for p in model.params:
        if p is None:
            continue
        for key in ("W", "b"):
            nbytes = p[key].size * dtype.itemsize
            chunk = data[offset : offset + nbytes]
            if len(chunk) != nbytes:
                raise FormatError("truncated model parameter blob")
            p[key] = (
                np.frombuffer(chunk, dtype=dtype)
                .reshape(p[key].shape)
                .astype(model.dtype)
            )
            offset += nbytes
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes in model file")
    return model
