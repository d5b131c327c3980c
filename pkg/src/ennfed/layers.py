"""Neural-network layers with explicit forward/backward passes.

Conventions:
  * arrays are numpy ndarrays; the leading axis is always the batch
  * image tensors are NHWC; dense inputs are (B, features)
  * `forward` returns (output, cache); `backward(upstream, cache)` returns
    (input_gradient, [parameter_gradients...]) with gradients aligned to
    `layer.params`; a layer never stores per-call state on itself, so one
    layer instance can serve concurrent forward passes
  * convolutions are valid-padding stride 1; max pooling is 2x2 stride 2
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

def he_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)

def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base layer: parameter container plus pure forward/backward."""

    name = "layer"

    @property
    def params(self) -> list[np.ndarray]:
        return []

    def set_params(self, arrays: list[np.ndarray]) -> None:
        if arrays:
            raise ShapeError(f"{self.name}: layer has no parameters")

    def out_shape(self, in_shape: tuple) -> tuple:
        raise NotImplementedError

    def forward(self, x: np.ndarray):
        raise NotImplementedError

    def backward(self, dy: np.ndarray, cache):
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError


class Dense(Layer):
    """Fully connected layer: y = x @ W (+ b)."""

    def __init__(self, n_in: int, n_out: int, *, bias: bool = True, init: str = "he",
                 rng: np.random.Generator | None = None, dtype=np.float32):
        self.n_in = int(n_in)
        self.n_out = int(n_out)
        self.init = init
        self.name = f"dense({n_in}->{n_out})"
        if rng is None:
            self.W = np.zeros((n_in, n_out), dtype=dtype)
        elif init == "he":
            self.W = he_uniform(rng, n_in, (n_in, n_out)).astype(dtype)
        elif init == "glorot":
            self.W = glorot_uniform(rng, n_in, n_out, (n_in, n_out)).astype(dtype)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.b = np.zeros(n_out, dtype=dtype) if bias else None

    @property
    def params(self):
        return [self.W] if self.b is None else [self.W, self.b]

    def set_params(self, arrays):
        self.W = arrays[0]
        if self.b is not None:
            self.b = arrays[1]

    def out_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.n_in:
            raise ShapeError(f"{self.name}: expected input ({self.n_in},), got {in_shape}")
        return (self.n_out,)

    def forward(self, x):
        y = x @ self.W
        if self.b is not None:
            y = y + self.b
        return y, x

    def backward(self, dy, cache):
        x = cache
        dW = x.T @ dy
        dx = dy @ self.W.T
        if self.b is None:
            return dx, [dW]
        return dx, [dW, dy.sum(axis=0)]

    def spec(self):
        return {"kind": "dense", "n_in": self.n_in, "n_out": self.n_out,
                "bias": self.b is not None, "init": self.init}


class Conv2D(Layer):
    """Valid-padding stride-1 convolution on NHWC input, via im2col."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, *, init: str = "he",
                 rng: np.random.Generator | None = None, dtype=np.float32):
        self.in_ch = int(in_ch)
        self.out_ch = int(out_ch)
        self.kernel = int(kernel)
        self.init = init
        self.name = f"conv2d({in_ch}->{out_ch},k{kernel})"
        fan_in = kernel * kernel * in_ch
        shape = (kernel, kernel, in_ch, out_ch)
        if rng is None:
            self.W = np.zeros(shape, dtype=dtype)
        elif init == "he":
            self.W = he_uniform(rng, fan_in, shape).astype(dtype)
        elif init == "glorot":
            self.W = glorot_uniform(rng, fan_in, out_ch, shape).astype(dtype)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.b = np.zeros(out_ch, dtype=dtype)

    @property
    def params(self):
        return [self.W, self.b]

    def set_params(self, arrays):
        self.W, self.b = arrays

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[2] != self.in_ch:
            raise ShapeError(f"{self.name}: expected input (H,W,{self.in_ch}), got {in_shape}")
        h, w, _ = in_shape
        k = self.kernel
        if h < k or w < k:
            raise ShapeError(f"{self.name}: input {in_shape} smaller than kernel {k}")
        return (h - k + 1, w - k + 1, self.out_ch)

    def _im2col(self, x):
        # (B,H,W,C) -> (B, H2, W2, k*k*C), rows ordered (ki, kj, c)
        k = self.kernel
        win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
        # win: (B, H2, W2, C, k, k) -> (B, H2, W2, k, k, C)
        cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))
        b, h2, w2 = cols.shape[:3]
        return cols.reshape(b, h2, w2, k * k * x.shape[3])

    def forward(self, x):
        cols = self._im2col(x)
        wmat = self.W.reshape(-1, self.out_ch)
        y = cols @ wmat + self.b
        return y, (cols, x.shape)

    def backward(self, dy, cache):
        cols, x_shape = cache
        k, cin, cout = self.kernel, self.in_ch, self.out_ch
        wmat = self.W.reshape(-1, cout)
        db = dy.sum(axis=(0, 1, 2))
        dW = (cols.reshape(-1, k * k * cin).T @ dy.reshape(-1, cout)).reshape(self.W.shape)
        dcols = dy @ wmat.T  # (B, H2, W2, k*k*Cin)
        b, h2, w2 = dcols.shape[:3]
        dcols = dcols.reshape(b, h2, w2, k, k, cin)
        dx = np.zeros(x_shape, dtype=dy.dtype)
        for i in range(k):  # scatter-add per kernel offset; k*k vectorized adds
            for j in range(k):
                dx[:, i : i + h2, j : j + w2, :] += dcols[:, :, :, i, j, :]
        return dx, [dW, db]

    def spec(self):
        return {"kind": "conv2d", "in_ch": self.in_ch, "out_ch": self.out_ch,
                "kernel": self.kernel, "init": self.init}


class ReLU(Layer):
    name = "relu"

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        return np.maximum(x, 0), x

    def backward(self, dy, cache):
        return dy * (cache > 0), []

    def spec(self):
        return {"kind": "relu"}


class Tanh(Layer):
    name = "tanh"

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        y = np.tanh(x)
        return y, y

    def backward(self, dy, cache):
        return dy * (1.0 - cache * cache), []

    def spec(self):
        return {"kind": "tanh"}


class MaxPool2D(Layer):
    """2x2 max pooling, stride 2.  Ties break toward the first window slot."""

    name = "maxpool2d"

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"{self.name}: expected (H,W,C), got {in_shape}")
        h, w, c = in_shape
        if h % 2 or w % 2:
            raise ShapeError(f"{self.name}: H and W must be even, got {in_shape}")
        return (h // 2, w // 2, c)

    def forward(self, x):
        b, h, w, c = x.shape
        win = x.reshape(b, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
        flat = win.reshape(b, h // 2, w // 2, c, 4)
        arg = flat.argmax(axis=4)
        y = np.take_along_axis(flat, arg[..., None], axis=4)[..., 0]
        return y, (arg, x.shape)

    def backward(self, dy, cache):
        arg, (b, h, w, c) = cache
        dflat = np.zeros((b, h // 2, w // 2, c, 4), dtype=dy.dtype)
        np.put_along_axis(dflat, arg[..., None], dy[..., None], axis=4)
        dx = dflat.reshape(b, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
        return dx.reshape(b, h, w, c), []

    def spec(self):
        return {"kind": "maxpool2d"}


class Flatten(Layer):
    name = "flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache):
        return dy.reshape(cache), []

    def spec(self):
        return {"kind": "flatten"}


class ResidualBlock(Layer):
    """relu(x + W2 @ relu(W1 @ x)): a width-preserving skip-connected unit.

    The trailing relu means the block is the identity for zeroed inner
    weights only on non-negative inputs; in the decoder stacks built here
    it always follows a relu, so that domain constraint holds.
    """

    def __init__(self, width: int, *, bias: bool = True, init: str = "he",
                 rng: np.random.Generator | None = None, dtype=np.float32):
        self.width = int(width)
        self.bias = bias
        self.init = init
        self.name = f"residual-block({width})"
        self.inner1 = Dense(width, width, bias=bias, init=init, rng=rng, dtype=dtype)
        self.inner2 = Dense(width, width, bias=bias, init=init, rng=rng, dtype=dtype)

    @property
    def params(self):
        return self.inner1.params + self.inner2.params

    def set_params(self, arrays):
        n1 = len(self.inner1.params)
        self.inner1.set_params(arrays[:n1])
        self.inner2.set_params(arrays[n1:])

    def out_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.width:
            raise ShapeError(f"{self.name}: expected input ({self.width},), got {in_shape}")
        return in_shape

    def forward(self, x):
        h1, c1 = self.inner1.forward(x)
        a1 = np.maximum(h1, 0)
        h2, c2 = self.inner2.forward(a1)
        s = x + h2
        return np.maximum(s, 0), (c1, h1, c2, s)

    def backward(self, dy, cache):
        c1, h1, c2, s = cache
        ds = dy * (s > 0)
        da1, g2 = self.inner2.backward(ds, c2)
        dh1 = da1 * (h1 > 0)
        dx_inner, g1 = self.inner1.backward(dh1, c1)
        return ds + dx_inner, g1 + g2

    def spec(self):
        return {"kind": "residual-block", "width": self.width, "bias": self.bias,
                "init": self.init}


class SoftmaxCrossEntropyHead(Layer):
    """Terminal marker for classifiers: forward is the identity on logits.

    The fused softmax + cross-entropy loss lives in `losses`; keeping the
    head in the layer chain makes the architecture self-describing in
    checkpoints.
    """

    name = "softmax-crossentropy-head"

    def out_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeError(f"{self.name}: expected (classes,), got {in_shape}")
        return in_shape

    def forward(self, x):
        return x, None

    def backward(self, dy, cache):
        return dy, []

    def spec(self):
        return {"kind": "softmax-crossentropy-head"}
