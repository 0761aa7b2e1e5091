"""Minimal numpy neural-network library: layers, loss, optimizer, checkpoints."""
from .functional import softmax, softmax_cross_entropy
from .layers import BatchNorm, Conv2D, Dense, Dropout, Flatten, LayerKind, MaxPool, ReLU
from .network import Network
from .optim import OptimizerState, Profile, SGDNesterov, lr_schedule, sgd_nesterov_step

__all__ = [
    "BatchNorm", "Conv2D", "Dense", "Dropout", "Flatten", "LayerKind", "MaxPool", "ReLU",
    "Network", "OptimizerState", "Profile", "SGDNesterov", "lr_schedule", "sgd_nesterov_step",
    "softmax", "softmax_cross_entropy",
]
