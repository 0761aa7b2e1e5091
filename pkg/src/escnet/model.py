"""The proposed 8-conv CNN and its VGG10 baseline.

Each block is conv -> BN -> ReLU -> conv -> BN -> ReLU -> max-pool, followed
by FC1 (512, ReLU, dropout 0.5) and FC2 (logits). Softmax is applied outside
the network by the loss and by prediction.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .nn import BatchNorm, Conv2D, Dense, Dropout, Flatten, MaxPool, Network, ReLU
from .nn.checkpoint import read_checkpoint, load_into, save_checkpoint

INPUT_SHAPE = (128, 128, 2)
FILTERS = (32, 32, 64, 64, 128, 128, 256, 256)
FC1_UNITS = 512

PROPOSED_KERNELS = ((3, 7), (3, 5), (3, 1), (3, 1), (1, 5), (1, 5), (3, 3), (3, 3))
PROPOSED_POOLS = ((4, 3), (4, 1), (1, 3), (2, 2))
VGG_KERNELS = ((3, 3),) * 8
VGG_POOLS = ((2, 2),) * 4

# expected (layer name, output shape) of the proposed network for one example
LAYER_SHAPES = (
    ("conv1", (128, 128, 32)), ("conv2", (128, 128, 32)), ("pool1", (32, 43, 32)),
    ("conv3", (32, 43, 64)), ("conv4", (32, 43, 64)), ("pool2", (8, 43, 64)),
    ("conv5", (8, 43, 128)), ("conv6", (8, 43, 128)), ("pool3", (8, 15, 128)),
    ("conv7", (8, 15, 256)), ("conv8", (8, 15, 256)), ("pool4", (4, 8, 256)),
    ("fc1", (512,)),
)


class Arch(str, Enum):
    PROPOSED = "proposed"
    VGG10 = "vgg10"


ARCH_TAGS = {Arch.PROPOSED: 0, Arch.VGG10: 1}


@dataclass(frozen=True)
class ModelConfig:
    arch: Arch = Arch.PROPOSED
    n_classes: int = 10
    input_shape: tuple = INPUT_SHAPE
    init_std: float = 0.05
    dropout: float = 0.5
    l2: float = 1e-4

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("n_classes must be at least 2")
        if tuple(self.input_shape) != INPUT_SHAPE:
            raise ValueError(f"input shape is fixed to {INPUT_SHAPE}")


def _layout(arch: Arch):
    if Arch(arch) is Arch.PROPOSED:
        return PROPOSED_KERNELS, PROPOSED_POOLS
    return VGG_KERNELS, VGG_POOLS


def build(cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32) -> Network:
    kernels, pools = _layout(cfg.arch)
    layers = []
    shape = tuple(cfg.input_shape)
    cin = shape[-1]
    for i, (ks, nf) in enumerate(zip(kernels, FILTERS), start=1):
        conv = Conv2D(cin, nf, ks, name=f"conv{i}", dtype=dtype)
        conv.params["W"][...] = rng.normal(0.0, cfg.init_std, conv.params["W"].shape)
        layers += [conv, BatchNorm(nf, name=f"bn{i}", dtype=dtype), ReLU(name=f"relu{i}")]
        cin = nf
        if i % 2 == 0:
            layers.append(MaxPool(pools[i // 2 - 1], name=f"pool{i // 2}"))
    for layer in layers:
        shape = layer.output_shape(shape)
    flat = int(np.prod(shape))
    fc1 = Dense(flat, FC1_UNITS, name="fc1", dtype=dtype)
    fc2 = Dense(FC1_UNITS, cfg.n_classes, name="fc2", dtype=dtype)
    for fc in (fc1, fc2):
        fc.params["W"][...] = rng.normal(0.0, cfg.init_std, fc.params["W"].shape)
    dropout_rng = np.random.default_rng(rng.integers(2 ** 63))
    layers += [Flatten(name="flatten"), fc1, ReLU(name="relu_fc1"),
               Dropout(cfg.dropout, name="dropout", rng=dropout_rng), fc2]
    meta = {"arch": Arch(cfg.arch).value, "n_classes": cfg.n_classes}
    return Network(layers, cfg.input_shape, meta)


def build_proposed(cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32) -> Network:
    return build(ModelConfig(Arch.PROPOSED, cfg.n_classes, cfg.input_shape, cfg.init_std,
                             cfg.dropout, cfg.l2), rng, dtype)


def build_vgg10(cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32) -> Network:
    return build(ModelConfig(Arch.VGG10, cfg.n_classes, cfg.input_shape, cfg.init_std,
                             cfg.dropout, cfg.l2), rng, dtype)


def param_count(arch: Arch, n_classes: int) -> int:
    """Closed-form trainable parameter count (conv W+b, BN gamma+beta, dense W+b)."""
    kernels, pools = _layout(arch)
    total, cin = 0, INPUT_SHAPE[-1]
    h, w = INPUT_SHAPE[:2]
    for (kh, kw), nf in zip(kernels, FILTERS):
        total += kh * kw * cin * nf + nf + 2 * nf
        cin = nf
    for ph, pw in pools:
        h, w = -(-h // ph), -(-w // pw)
    flat = h * w * FILTERS[-1]
    return total + flat * FC1_UNITS + FC1_UNITS + FC1_UNITS * n_classes + n_classes


def forward_logits(net: Network, batch, train: bool = False):
    return net.forward(batch, train=train)


def extract_fc1(net: Network, batch, batch_size: int = 32):
    """Post-ReLU FC1 activations in eval mode, shape (B, 512)."""
    return np.concatenate([net.forward(batch[i:i + batch_size], train=False, until="relu_fc1")
                           for i in range(0, len(batch), batch_size)], axis=0)


def predict_proba(net: Network, batch, batch_size: int = 32):
    return net.predict_proba(batch, batch_size)


def save_model(path, net: Network) -> None:
    arch = Arch(net.meta["arch"])
    save_checkpoint(path, net, ARCH_TAGS[arch], int(net.meta["n_classes"]))


def load_model(path) -> Network:
    record = read_checkpoint(path)
    arch = {v: k for k, v in ARCH_TAGS.items()}[record.arch_tag]
    net = build(ModelConfig(arch, record.n_classes), np.random.default_rng(0))
    load_into(net, record)
    return net


__all__ = ["Arch", "ModelConfig", "LAYER_SHAPES", "build", "build_proposed", "build_vgg10",
           "extract_fc1", "forward_logits", "load_model", "param_count", "predict_proba",
           "save_model"]
