"""Run configuration: ``key = value`` text files with command-line overrides.

Example::

    # desk-scale run
    seed = 7
    arch = proposed
    feature = mel
    mixup = true
    alpha = 0.2
    profile = esc
    epochs = 30
    batch_size = 8
    features = feat/features.csv
    out = runs/toy
"""
from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .features import BandType
from .harness import TrainConfig
from .mixup import MixupConfig
from .model import Arch
from .nn.optim import Profile

SEED_ENV = "ESC_SEED"


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_epochs(text: str):
    return None if text.strip().lower() == "auto" else int(text)


@dataclass(frozen=True)
class RunConfig:
    seed: int
    feature: BandType = BandType.MEL
    arch: Arch = Arch.PROPOSED
    mixup: bool = True
    alpha: float = 0.2
    augment: bool = False
    profile: Profile = Profile.ESC
    epochs: int | None = None
    batch_size: int = 200
    lr: float = 0.1
    silence_db: float = 60.0
    deterministic: bool = True
    jobs: int = 1
    validate_every_epoch: bool = True
    manifest: str = ""
    features: str = ""
    out: str = "runs"

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.batch_size < 1 or self.jobs < 1:
            raise ValueError("batch_size and jobs must be at least 1")
        if self.epochs is not None and self.epochs < 1:
            raise ValueError("epochs must be at least 1 or 'auto'")
        if self.lr <= 0:
            raise ValueError("lr must be positive")

    @property
    def effective_jobs(self) -> int:
        return 1 if self.deterministic else self.jobs

    def train_config(self) -> TrainConfig:
        return TrainConfig(arch=self.arch, mixup=MixupConfig(self.alpha, self.mixup),
                           profile=self.profile, epochs=self.epochs, batch_size=self.batch_size,
                           base_lr=self.lr, seed=self.seed,
                           validate_every_epoch=self.validate_every_epoch)

    def resolve(self, base: Path) -> "RunConfig":
        """Make relative paths absolute against ``base`` (the config file's directory)."""
        def fix(p):
            return str(base / p) if p and not Path(p).is_absolute() else p
        return replace(self, manifest=fix(self.manifest), features=fix(self.features), out=fix(self.out))


_PARSERS = {
    "seed": int, "feature": BandType, "arch": Arch, "mixup": _parse_bool, "alpha": float,
    "augment": _parse_bool, "profile": Profile, "epochs": _parse_epochs, "batch_size": int,
    "lr": float, "silence_db": float, "deterministic": _parse_bool, "jobs": int,
    "validate_every_epoch": _parse_bool, "manifest": str, "features": str, "out": str,
}
KEYS = tuple(f.name for f in fields(RunConfig))


def _split(line: str, where: str):
    if "=" not in line:
        raise ConfigError(f"{where}: expected 'key = value', got {line!r}")
    key, value = line.split("=", 1)
    key = key.strip()
    if key not in _PARSERS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    return key, value.strip()


def parse_config(text: str, overrides=(), source: str = "<config>", env=None) -> RunConfig:
    """Parse config text, then apply ``key=value`` overrides in order.

    ``seed`` is required unless the ``ESC_SEED`` environment variable is set.
    """
    env = os.environ if env is None else env
    raw: dict[str, tuple[str, str]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        key, value = _split(line, where)
        raw[key] = (value, where)
    for item in overrides:
        key, value = _split(item, f"override {item!r}")
        raw[key] = (value, f"override {item!r}")
    if "seed" not in raw:
        if env.get(SEED_ENV):
            raw["seed"] = (env[SEED_ENV], f"${SEED_ENV}")
        else:
            raise ConfigError(f"{source}: missing required key 'seed'")
    values = {}
    for key, (value, where) in raw.items():
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None
    try:
        return RunConfig(**values)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path, overrides=(), env=None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), overrides, str(path), env)


def _format(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if hasattr(value, "value"):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {_format(getattr(cfg, k))}\n" for k in KEYS)
