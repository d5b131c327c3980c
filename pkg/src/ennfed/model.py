"""Model container: an ordered layer stack with a validated shape chain.

Parameters live in the layers; the model provides the canonical flat
ordering used everywhere a whole parameter vector is needed (updates,
checkpoints): layers in declaration order, each layer's tensors in its
own declared order, each raveled C-order.
"""

from __future__ import annotations

import numpy as np

from . import layers as L
from .errors import ShapeError
from .rng import seeded_rng

_LAYER_KINDS = {
    "dense": lambda s, rng, dt: L.Dense(s["n_in"], s["n_out"], bias=s.get("bias", True),
                                        init=s.get("init", "he"), rng=rng, dtype=dt),
    "conv2d": lambda s, rng, dt: L.Conv2D(s["in_ch"], s["out_ch"], s["kernel"],
                                          init=s.get("init", "he"), rng=rng, dtype=dt),
    "relu": lambda s, rng, dt: L.ReLU(),
    "tanh": lambda s, rng, dt: L.Tanh(),
    "maxpool2d": lambda s, rng, dt: L.MaxPool2D(),
    "flatten": lambda s, rng, dt: L.Flatten(),
    "residual-block": lambda s, rng, dt: L.ResidualBlock(s["width"], bias=s.get("bias", True),
                                                         init=s.get("init", "he"), rng=rng, dtype=dt),
    "softmax-crossentropy-head": lambda s, rng, dt: L.SoftmaxCrossEntropyHead(),
}


class Model:
    def __init__(self, layer_list: list[L.Layer], input_shape: tuple, dtype=np.float32):
        self.layers = list(layer_list)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.dtype = np.dtype(dtype)
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            if isinstance(layer, L.SoftmaxCrossEntropyHead) and i != len(self.layers) - 1:
                raise ShapeError("softmax-crossentropy-head must be the final layer")
            try:
                shape = layer.out_shape(shape)
            except ShapeError as e:
                raise ShapeError(f"layer {i} ({layer.name}): {e}") from None
        self.output_shape = shape

    @classmethod
    def build(cls, specs: list[dict], input_shape: tuple, *, seed: int | None = None,
              rng: np.random.Generator | None = None, dtype=np.float32) -> "Model":
        """Build from layer spec dicts; weights drawn from one labelled stream
        per layer so builds are reproducible layer-by-layer."""
        built = []
        for i, spec in enumerate(specs):
            kind = spec.get("kind")
            if kind not in _LAYER_KINDS:
                raise ShapeError(f"layer {i}: unknown kind {kind!r}")
            layer_rng = rng
            if layer_rng is None:
                layer_rng = seeded_rng(0 if seed is None else seed, "init", i, kind)
            built.append(_LAYER_KINDS[kind](spec, layer_rng, dtype))
        return cls(built, input_shape, dtype=dtype)

    # ---- parameter bookkeeping -------------------------------------------

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend(layer.params)
        return out

    @property
    def param_count(self) -> int:
        return int(sum(p.size for p in self.params))

    def param_layer_names(self) -> list[str]:
        names = []
        for layer in self.layers:
            names.extend([layer.name] * len(layer.params))
        return names

    def flatten_params(self) -> np.ndarray:
        ps = self.params
        if not ps:
            return np.zeros(0, dtype=self.dtype)
        return np.concatenate([p.ravel() for p in ps])

    def set_flat_params(self, vec: np.ndarray) -> None:
        if vec.size != self.param_count:
            raise ShapeError(f"flat parameter vector has {vec.size} values, model has {self.param_count}")
        self.set_param_arrays(self.unflatten(vec))

    def unflatten(self, vec: np.ndarray) -> list[np.ndarray]:
        """Split a flat vector into arrays shaped like the parameters.

        unflatten(flatten(d)) == d exactly; the layout is the canonical
        declaration order."""
        if vec.size != self.param_count:
            raise ShapeError(f"flat vector has {vec.size} values, model has {self.param_count}")
        out, pos = [], 0
        for p in self.params:
            out.append(vec[pos : pos + p.size].reshape(p.shape).astype(p.dtype, copy=False))
            pos += p.size
        return out

    def set_param_arrays(self, arrays: list[np.ndarray]) -> None:
        i = 0
        for layer in self.layers:
            n = len(layer.params)
            layer.set_params([np.ascontiguousarray(a, dtype=self.dtype) for a in arrays[i : i + n]])
            i += n

    def copy(self) -> "Model":
        other = Model.build(self.specs(), self.input_shape, rng=None, seed=0, dtype=self.dtype)
        other.set_param_arrays([p.copy() for p in self.params])
        return other

    def astype(self, dtype) -> "Model":
        other = Model.build(self.specs(), self.input_shape, rng=None, seed=0, dtype=dtype)
        other.set_param_arrays([p.astype(dtype) for p in self.params])
        return other

    # ---- execution --------------------------------------------------------

    def _check_input(self, x):
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"model expects input {self.input_shape} per sample, got {x.shape[1:]}")

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Inference pass; pure function of (params, x)."""
        self._check_input(x)
        for layer in self.layers:
            x, _ = layer.forward(x)
        return x

    def forward_train(self, x: np.ndarray):
        """Forward pass retaining per-layer caches for a later backward."""
        self._check_input(x)
        caches = []
        for layer in self.layers:
            x, c = layer.forward(x)
            caches.append(c)
        return x, caches

    def backward(self, dy: np.ndarray, caches: list):
        """Reverse pass. Returns (input_gradient, grads) where grads aligns
        with `self.params`.  Requires the caches of a prior forward_train."""
        if caches is None or len(caches) != len(self.layers):
            raise ShapeError("backward called without a matching forward_train pass")
        grads: list[np.ndarray] = []
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dy, g = layer.backward(dy, cache)
            grads[:0] = g
        return dy, grads

    def specs(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]


def flatten_arrays(arrays: list[np.ndarray]) -> np.ndarray:
    """Canonical flattening for parameter-shaped lists (e.g. deltas)."""
    return np.concatenate([a.ravel() for a in arrays])
