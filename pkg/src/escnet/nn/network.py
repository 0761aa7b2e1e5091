from __future__ import annotations

import numpy as np

from ..errors import NumericalError
from . import functional as F
from .layers import BatchNorm, Conv2D, Dropout, Layer


class Network:
    """An ordered layer stack producing logits.

    ``meta`` carries free-form tags (architecture, class count) that the
    checkpoint writer records in its header.
    """

    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...], meta: dict | None = None):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.meta = dict(meta or {})
        if self.layers and isinstance(self.layers[0], Conv2D):
            self.layers[0].need_input_grad = False
        self.check_nan = True

    def layer(self, name: str) -> Layer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Per-layer output shapes for a single example, computed symbolically."""
        shape = self.input_shape
        out = []
        for layer in self.layers:
            shape = tuple(layer.output_shape(shape))
            out.append((layer.name, shape))
        return out

    def forward(self, x, train: bool = False, until: str | None = None):
        for layer in self.layers:
            x = layer.forward(x, train)
            if until is not None and layer.name == until:
                return x
        if self.check_nan and not np.all(np.isfinite(x)):
            raise NumericalError("non-finite network output")
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def predict_proba(self, x, batch_size: int = 32):
        """Eval-mode softmax probabilities, evaluated in fixed-size chunks."""
        outs = [F.softmax(self.forward(x[i:i + batch_size], train=False).astype(np.float64))
                for i in range(0, len(x), batch_size)]
        return np.concatenate(outs, axis=0)

    def recalibrate_bn(self, x, batch_size: int = 32) -> None:
        """Replace BN running statistics with averages over a pass through ``x``.

        Each chunk is normalized with its own batch statistics, as in training;
        the per-layer means and variances are pooled across chunks.
        """
        bns = [layer for layer in self.layers if isinstance(layer, BatchNorm)]
        for bn in bns:
            bn.begin_recalibration()
        try:
            for i in range(0, len(x), batch_size):
                h = x[i:i + batch_size]
                for layer in self.layers:
                    if isinstance(layer, Dropout):
                        break
                    h = layer.forward(h, train=True)
                    layer._cache = None
        finally:
            for bn in bns:
                bn.end_recalibration()

    def parameters(self):
        """Yield ``(key, param, grad, decays)`` for every trainable array."""
        for i, layer in enumerate(self.layers):
            for name, p in layer.params.items():
                yield (i, name), p, layer.grads.get(name), name in layer.decay

    def num_params(self) -> int:
        return sum(p.size for layer in self.layers for p in layer.params.values())
