"""Minimal layer kit with exact backpropagation.

Everything is numpy: dense and strided-conv layers with im2col, ReLU,
a two-branch Q-network (conv image branch + dense speed branch + merged
head, 21 outputs), Adam, and a self-describing binary checkpoint format.
float32 is the training dtype; float64 mode exists for gradient
verification against finite differences.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .simcore import ContractError

N_OUTPUTS = 21
CHECKPOINT_MAGIC = b"QNET1"


class ShapeError(ContractError):
    """Tensor shapes inconsistent with the layer topology."""


def _init_uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Dense:
    def __init__(self, n_in: int, n_out: int, rng, dtype=np.float32):
        self.n_in, self.n_out = n_in, n_out
        self.w = _init_uniform(rng, (n_in, n_out), n_in, dtype)
        self.b = np.zeros(n_out, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    def forward(self, x):
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"dense: expected {self.n_in} inputs, got {x.shape[-1]}")
        self._x = x
        return x @ self.w + self.b

    def backward(self, dy):
        if self._x is None:
            raise ContractError("dense: backward called before forward")
        self.dw += self._x.T @ dy
        self.db += dy.sum(axis=0)
        return dy @ self.w.T

    def params(self):
        return [("w", self.w, self.dw), ("b", self.b, self.db)]


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        if self._mask is None:
            raise ContractError("relu: backward called before forward")
        return dy * self._mask

    def params(self):
        return []


class Flatten:
    def __init__(self):
        self._shape = None

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        if self._shape is None:
            raise ContractError("flatten: backward called before forward")
        return dy.reshape(self._shape)

    def params(self):
        return []


class Conv2D:
    """Valid-padding strided convolution over (N, C, H, W) inputs."""

    def __init__(self, c_in, c_out, kernel, stride, rng, dtype=np.float32):
        self.c_in, self.c_out = c_in, c_out
        self.kernel, self.stride = kernel, stride
        fan_in = c_in * kernel * kernel
        self.w = _init_uniform(rng, (c_out, c_in, kernel, kernel), fan_in, dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._cols = None
        self._xshape = None

    def out_hw(self, h, w):
        k, s = self.kernel, self.stride
        if h < k or w < k:
            raise ShapeError(f"conv: input {h}x{w} smaller than kernel {k}")
        return (h - k) // s + 1, (w - k) // s + 1

    def _im2col(self, x):
        n, c, h, w = x.shape
        oh, ow = self.out_hw(h, w)
        k, s = self.kernel, self.stride
        sn, sc, sh, sw = x.strides
        windows = np.lib.stride_tricks.as_strided(
            x, shape=(n, c, oh, ow, k, k),
            strides=(sn, sc, sh * s, sw * s, sh, sw),
            writeable=False,
        )
        # (N, OH, OW, C*K*K)
        return windows.transpose(0, 2, 3, 1, 4, 5).reshape(n, oh, ow, c * k * k)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise ShapeError(f"conv: expected (N,{self.c_in},H,W), got {x.shape}")
        self._xshape = x.shape
        cols = self._im2col(x)
        self._cols = cols
        wmat = self.w.reshape(self.c_out, -1)
        out = cols @ wmat.T + self.b
        return out.transpose(0, 3, 1, 2)  # (N, C_out, OH, OW)

    def backward(self, dy):
        if self._cols is None:
            raise ContractError("conv: backward called before forward")
        n, c, h, w = self._xshape
        k, s = self.kernel, self.stride
        oh, ow = self.out_hw(h, w)
        dyt = dy.transpose(0, 2, 3, 1)  # (N, OH, OW, C_out)
        wmat = self.w.reshape(self.c_out, -1)
        self.dw += (
            dyt.reshape(-1, self.c_out).T @ self._cols.reshape(-1, wmat.shape[1])
        ).reshape(self.w.shape)
        self.db += dyt.sum(axis=(0, 1, 2))
        dcols = dyt @ wmat  # (N, OH, OW, C*K*K)
        dcols = dcols.reshape(n, oh, ow, c, k, k)
        dx = np.zeros(self._xshape, dtype=dy.dtype)
        for i in range(k):
            for j in range(k):
                dx[:, :, i:i + oh * s:s, j:j + ow * s:s] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dx

    def params(self):
        return [("w", self.w, self.dw), ("b", self.b, self.db)]


def _run_forward(layers, x):
    for layer in layers:
        x = layer.forward(x)
    return x


def _run_backward(layers, dy):
    for layer in reversed(layers):
        dy = layer.backward(dy)
    return dy


@dataclass(frozen=True)
class QTopology:
    """Configurable layer sizes; defaults follow the classic Atari-DQN style."""

    image_shape: tuple[int, int, int] = (8, 105, 150)  # (stack, rows, cols)
    conv1_filters: int = 16
    conv1_kernel: int = 8
    conv1_stride: int = 4
    conv2_filters: int = 32
    conv2_kernel: int = 4
    conv2_stride: int = 2
    image_dense: int = 256
    speed_len: int = 8
    speed_dense: int = 32
    head_dense: int = 128
    n_outputs: int = N_OUTPUTS


class QNetwork:
    """Two-branch Q-network: conv over the frame stack, dense over the speeds."""

    def __init__(self, topo: QTopology = QTopology(), seed: int = 0, dtype=np.float32):
        self.topo = topo
        self.seed = seed
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        c, h, w = topo.image_shape
        conv1 = Conv2D(c, topo.conv1_filters, topo.conv1_kernel, topo.conv1_stride, rng, dtype)
        h1, w1 = conv1.out_hw(h, w)
        conv2 = Conv2D(topo.conv1_filters, topo.conv2_filters, topo.conv2_kernel,
                       topo.conv2_stride, rng, dtype)
        h2, w2 = conv2.out_hw(h1, w1)
        flat = topo.conv2_filters * h2 * w2
        self.image_branch = [conv1, ReLU(), conv2, ReLU(), Flatten(),
                             Dense(flat, topo.image_dense, rng, dtype), ReLU()]
        self.speed_branch = [Dense(topo.speed_len, topo.speed_dense, rng, dtype), ReLU()]
        merged = topo.image_dense + topo.speed_dense
        self.head = [Dense(merged, topo.head_dense, rng, dtype), ReLU(),
                     Dense(topo.head_dense, topo.n_outputs, rng, dtype)]
        self._split = topo.image_dense

    def _layers(self):
        return self.image_branch + self.speed_branch + self.head

    def forward(self, images: np.ndarray, speeds: np.ndarray) -> np.ndarray:
        """images: (N, stack, H, W) in [0,1]; speeds: (N, stack). Returns (N, 21)."""
        images = np.ascontiguousarray(images, dtype=self.dtype)
        speeds = np.ascontiguousarray(speeds, dtype=self.dtype)
        if images.ndim != 4:
            raise ShapeError(f"expected (N,C,H,W) images, got {images.shape}")
        img_feat = _run_forward(self.image_branch, images)
        spd_feat = _run_forward(self.speed_branch, speeds)
        merged = np.concatenate([img_feat, spd_feat], axis=1)
        return _run_forward(self.head, merged)

    def backward(self, dq: np.ndarray) -> None:
        """Accumulate parameter gradients for the most recent forward batch."""
        dmerged = _run_backward(self.head, np.ascontiguousarray(dq, dtype=self.dtype))
        _run_backward(self.image_branch, dmerged[:, :self._split])
        _run_backward(self.speed_branch, dmerged[:, self._split:])

    def zero_grads(self):
        for _, _, g in self.named_params():
            g[...] = 0.0

    def named_params(self):
        out = []
        for i, layer in enumerate(self._layers()):
            for name, p, g in layer.params():
                out.append((f"layer{i}.{name}", p, g))
        return out

    def describe(self) -> dict:
        return {
            "kind": "vision",
            "dtype": self.dtype.name,
            "seed": self.seed,
            "topology": {k: list(v) if isinstance(v, tuple) else v
                         for k, v in vars(self.topo).items()},
        }


class FeatureQNetwork:
    """Dense Q-network over the 16-dim feature state (8 speeds + 8 gaps)."""

    def __init__(self, n_inputs: int = 16, hidden: tuple[int, int] = (64, 64),
                 n_outputs: int = N_OUTPUTS, seed: int = 0, dtype=np.float32):
        self.n_inputs = n_inputs
        self.hidden = tuple(hidden)
        self.n_outputs = n_outputs
        self.seed = seed
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        sizes = [n_inputs, *hidden]
        layers = []
        for a, b in zip(sizes, sizes[1:]):
            layers += [Dense(a, b, rng, dtype), ReLU()]
        layers.append(Dense(sizes[-1], n_outputs, rng, dtype))
        self.layers = layers

    def _layers(self):
        return self.layers

    def forward(self, features: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(features, dtype=self.dtype)
        if x.shape[-1] != self.n_inputs:
            raise ShapeError(f"expected {self.n_inputs} features, got {x.shape[-1]}")
        return _run_forward(self.layers, x)

    def backward(self, dq: np.ndarray) -> None:
        _run_backward(self.layers, np.ascontiguousarray(dq, dtype=self.dtype))

    zero_grads = QNetwork.zero_grads
    named_params = QNetwork.named_params

    def describe(self) -> dict:
        return {
            "kind": "feature",
            "dtype": self.dtype.name,
            "seed": self.seed,
            "topology": {"n_inputs": self.n_inputs, "hidden": list(self.hidden),
                         "n_outputs": self.n_outputs},
        }


def build_network(descriptor: dict):
    """Reconstruct an uninitialized-weights network from a describe() dict."""
    kind = descriptor["kind"]
    dtype = np.dtype(descriptor["dtype"])
    seed = descriptor.get("seed", 0)
    topo = descriptor["topology"]
    if kind == "vision":
        fields = dict(topo)
        fields["image_shape"] = tuple(fields["image_shape"])
        return QNetwork(QTopology(**fields), seed=seed, dtype=dtype)
    if kind == "feature":
        return FeatureQNetwork(n_inputs=topo["n_inputs"], hidden=tuple(topo["hidden"]),
                               n_outputs=topo["n_outputs"], seed=seed, dtype=dtype)
    raise ContractError(f"unknown network kind {kind!r}")


class Adam:
    """Standard adaptive-moment optimizer over a network's parameter list."""

    def __init__(self, net, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for _, p, _ in net.named_params()]
        self.v = [np.zeros_like(p) for _, p, _ in net.named_params()]

    def step(self, net, lr: float | None = None):
        lr = self.lr if lr is None else lr
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, (_, p, g) in enumerate(net.named_params()):
            if g.shape != p.shape:
                raise ShapeError("gradient/parameter shape mismatch")
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            mhat = self.m[i] / (1 - b1 ** self.t)
            vhat = self.v[i] / (1 - b2 ** self.t)
            p -= (lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype)


def clone_into_target(net):
    """Deep value copy; later updates to the online net leave the copy untouched."""
    target = build_network(net.describe())
    for (_, p_src, _), (_, p_dst, _) in zip(net.named_params(), target.named_params()):
        p_dst[...] = p_src
    return target


def save_checkpoint(net, path) -> None:
    """magic, u32 descriptor length, JSON descriptor, then LE float32 payloads."""
    descriptor = json.dumps(net.describe(), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(descriptor)))
        fh.write(descriptor)
        for _, p, _ in net.named_params():
            fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:5] != CHECKPOINT_MAGIC:
        raise ContractError("bad checkpoint magic")
    (dlen,) = struct.unpack_from("<I", data, 5)
    descriptor = json.loads(data[9:9 + dlen].decode("utf-8"))
    net = build_network(descriptor)
    offset = 9 + dlen
    for _, p, _ in net.named_params():
        count = p.size
        chunk = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        p[...] = chunk.reshape(p.shape).astype(p.dtype)
        offset += count * 4
    if offset != len(data):
        raise ContractError("checkpoint payload length mismatch")
    return net
