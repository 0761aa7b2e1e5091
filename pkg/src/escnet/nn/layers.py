"""Stateful layer wrappers around the functional kernels."""
from __future__ import annotations

from enum import IntEnum

import numpy as np

from . import functional as F

BN_MOMENTUM = 0.99


class LayerKind(IntEnum):
    CONV2D = 1
    BATCHNORM = 2
    RELU = 3
    MAXPOOL = 4
    DENSE = 5
    DROPOUT = 6
    FLATTEN = 7


class Layer:
    kind: LayerKind
    # parameter names that receive the L2 penalty
    decay: tuple[str, ...] = ()

    def __init__(self, name: str = ""):
        self.name = name
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x, train: bool = False):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def output_shape(self, shape):
        return shape

    def state_arrays(self) -> list[np.ndarray]:
        """Arrays persisted in checkpoints, in a fixed order."""
        return list(self.params.values())

    def load_state_arrays(self, arrays):
        for key, arr in zip(self.params, arrays):
            self.params[key][...] = arr

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class Conv2D(Layer):
    kind = LayerKind.CONV2D
    decay = ("W",)

    def __init__(self, in_channels, filters, ksize, name="", dtype=np.float32):
        super().__init__(name)
        self.ksize = tuple(ksize)
        self.filters = filters
        self.params = {
            "W": np.zeros(self.ksize + (in_channels, filters), dtype=dtype),
            "b": np.zeros(filters, dtype=dtype),
        }
        self.need_input_grad = True

    def forward(self, x, train=False):
        out, cache = F.conv2d_forward(x, self.params["W"], self.params["b"])
        self._cache = cache if train else None
        return out

    def backward(self, grad):
        gx, gw, gb = F.conv2d_backward(grad, self._cache, self.need_input_grad)
        self.grads = {"W": gw, "b": gb}
        self._cache = None
        return gx

    def output_shape(self, shape):
        return shape[:-1] + (self.filters,)


class BatchNorm(Layer):
    kind = LayerKind.BATCHNORM

    def __init__(self, channels, name="", dtype=np.float32, momentum=BN_MOMENTUM, eps=F.BN_EPS):
        super().__init__(name)
        self.momentum = momentum
        self.eps = eps
        self.params = {"gamma": np.ones(channels, dtype=dtype), "beta": np.zeros(channels, dtype=dtype)}
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        # running stats are seeded from the first training batch
        self.tracked = False
        self._accumulator = None

    def forward(self, x, train=False):
        y, cache = F.batchnorm_forward(x, self.params["gamma"], self.params["beta"], train,
                                       self.running_mean, self.running_var, self.eps)
        if train and self._accumulator is not None:
            n = x.size // x.shape[-1]
            self._accumulator.append((n, cache["mean"].astype(np.float64), cache["var"].astype(np.float64)))
        elif train:
            if self.tracked:
                m = self.momentum
                self.running_mean[...] = m * self.running_mean + (1 - m) * cache["mean"]
                self.running_var[...] = m * self.running_var + (1 - m) * cache["var"]
            else:
                self.running_mean[...] = cache["mean"]
                self.running_var[...] = cache["var"]
                self.tracked = True
            self._cache = cache
        return y

    def begin_recalibration(self):
        self._accumulator = []

    def end_recalibration(self):
        acc, self._accumulator = self._accumulator, None
        if not acc:
            return
        n = np.array([a[0] for a in acc], dtype=np.float64)
        means = np.stack([a[1] for a in acc])
        second = np.stack([a[2] + a[1] ** 2 for a in acc])
        w = (n / n.sum())[:, None]
        mean = (w * means).sum(axis=0)
        self.running_mean[...] = mean
        self.running_var[...] = np.maximum((w * second).sum(axis=0) - mean ** 2, 0.0)
        self.tracked = True

    def backward(self, grad):
        gx, gg, gb = F.batchnorm_backward(grad, self._cache)
        self.grads = {"gamma": gg, "beta": gb}
        self._cache = None
        return gx

    def state_arrays(self):
        return [self.params["gamma"], self.params["beta"], self.running_mean, self.running_var]

    def load_state_arrays(self, arrays):
        g, b, m, v = arrays
        self.params["gamma"][...] = g
        self.params["beta"][...] = b
        self.running_mean[...] = m
        self.running_var[...] = v
        self.tracked = True


class ReLU(Layer):
    kind = LayerKind.RELU

    def forward(self, x, train=False):
        y, mask = F.relu_forward(x)
        self._cache = mask if train else None
        return y

    def backward(self, grad):
        return F.relu_backward(grad, self._cache)


class MaxPool(Layer):
    kind = LayerKind.MAXPOOL

    def __init__(self, ksize, name=""):
        super().__init__(name)
        self.ksize = tuple(ksize)

    def forward(self, x, train=False):
        y, cache = F.maxpool_forward(x, self.ksize)
        self._cache = cache if train else None
        return y

    def backward(self, grad):
        return F.maxpool_backward(grad, self._cache)

    def output_shape(self, shape):
        return F.pool_output_shape(shape[0], shape[1], self.ksize) + shape[2:]


class Flatten(Layer):
    """Row-major flatten of (H, W, C): band-major, time-middle, channel-minor."""

    kind = LayerKind.FLATTEN

    def forward(self, x, train=False):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._cache)

    def output_shape(self, shape):
        return (int(np.prod(shape)),)


class Dense(Layer):
    kind = LayerKind.DENSE
    decay = ("W",)

    def __init__(self, in_features, units, name="", dtype=np.float32):
        super().__init__(name)
        self.units = units
        self.params = {"W": np.zeros((in_features, units), dtype=dtype), "b": np.zeros(units, dtype=dtype)}

    def forward(self, x, train=False):
        y, cache = F.dense_forward(x, self.params["W"], self.params["b"])
        self._cache = cache if train else None
        return y

    def backward(self, grad):
        gx, gw, gb = F.dense_backward(grad, self._cache)
        self.grads = {"W": gw, "b": gb}
        self._cache = None
        return gx

    def output_shape(self, shape):
        return (self.units,)


class Dropout(Layer):
    kind = LayerKind.DROPOUT

    def __init__(self, rate, name="", rng: np.random.Generator | None = None):
        super().__init__(name)
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def forward(self, x, train=False):
        y, mask = F.dropout_forward(x, self.rate, train, self.rng)
        self._cache = mask
        return y

    def backward(self, grad):
        return F.dropout_backward(grad, self._cache)
