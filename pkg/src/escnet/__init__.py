"""Environmental sound classification: features, mixup and a from-scratch CNN."""

__version__ = "0.1.0"
