"""Shared setup for the experiment scripts: build and featurize the synthetic set once."""
from __future__ import annotations

import argparse
import logging
from pathlib import Path

from escnet.dataset import featurize_manifest, load_clipset, read_manifest
from escnet.synth import make_dataset


def common_args(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--root", default="toy", help="working directory for audio, features and results")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kind", default="mel", choices=["mel", "gt"])
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def toy_clips(root, kind="mel", seed=0):
    logging.getLogger().setLevel(logging.INFO)
    root = Path(root)
    manifest = root / "wav" / "manifest.csv"
    if not manifest.exists():
        make_dataset(root / "wav", seed=seed)
    feat = root / f"feat_{kind}" / "features.csv"
    if not feat.exists():
        feat, failures = featurize_manifest(read_manifest(manifest), feat.parent, kind)
        if failures:
            raise SystemExit(f"featurization failed for {len(failures)} clips")
    return load_clipset(read_manifest(feat))
