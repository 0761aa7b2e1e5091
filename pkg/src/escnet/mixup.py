"""Mixup mini-batches: convex combinations of sample pairs and their labels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyDataset

DEFAULT_ALPHA = 0.2
ALPHA_GRID = (0.1, 0.2, 0.3, 0.4, 0.5)


@dataclass(frozen=True)
class MixupConfig:
    alpha: float = DEFAULT_ALPHA
    enabled: bool = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


@dataclass
class MixupBatch:
    inputs: np.ndarray
    labels: np.ndarray
    lambdas: np.ndarray
    first: np.ndarray
    second: np.ndarray


def sample_lambda(alpha: float, rng: np.random.Generator, size=None):
    """Draw from Beta(alpha, alpha) as g1 / (g1 + g2) with g ~ Gamma(alpha, 1)."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    g1 = rng.gamma(alpha, 1.0, size)
    g2 = rng.gamma(alpha, 1.0, size)
    total = np.asarray(g1 + g2)
    # both gammas can underflow to 0 for tiny alpha
    with np.errstate(invalid="ignore", divide="ignore"):
        lam = np.where(total > 0, g1 / total, 0.5)
    return lam if size is not None else float(lam)


def one_hot(y, n_classes: int, dtype=np.float64) -> np.ndarray:
    y = np.asarray(y)
    out = np.zeros((len(y), n_classes), dtype=dtype)
    out[np.arange(len(y)), y] = 1
    return out


def mix_batch(x: np.ndarray, y: np.ndarray, batch_size: int, n_classes: int,
              cfg: MixupConfig, rng: np.random.Generator,
              first: np.ndarray | None = None) -> MixupBatch:
    """Assemble one batch of mixed inputs and soft labels.

    Pairs ``(i, j)`` are drawn uniformly with replacement from the whole set,
    one lambda per slot. Passing ``first`` fixes the ``i`` indices (used by the
    training loop to walk a shuffled epoch); ``batch_size`` is then ignored.
    With ``cfg.enabled`` false every lambda is 1 and no partner is mixed in.
    """
    n = len(x)
    if n == 0:
        raise EmptyDataset("cannot draw a batch from an empty dataset")
    if n_classes < 2:
        raise ValueError("n_classes must be at least 2")
    y = np.asarray(y)
    if first is None:
        first = rng.integers(0, n, size=batch_size)
    first = np.asarray(first)
    m = len(first)

    if not cfg.enabled:
        return MixupBatch(x[first].copy(), one_hot(y[first], n_classes),
                          np.ones(m), first, first.copy())

    second = rng.integers(0, n, size=m)
    lam = sample_lambda(cfg.alpha, rng, size=m)
    shape = (m,) + (1,) * (x.ndim - 1)
    lam_x = lam.reshape(shape).astype(x.dtype)
    inputs = lam_x * x[first] + (1 - lam_x) * x[second]
    labels = lam[:, None] * one_hot(y[first], n_classes) + (1 - lam[:, None]) * one_hot(y[second], n_classes)
    same = first == second
    if same.any():
        inputs[same] = x[first[same]]
        labels[same] = one_hot(y[first[same]], n_classes)
    return MixupBatch(inputs, labels, lam, first, second)
