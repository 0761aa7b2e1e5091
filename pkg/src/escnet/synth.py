"""Synthetic four-class sound set for desk-scale experiments.

Classes: ``sweep`` (slow sine sweep), ``am_noise`` (amplitude-modulated
noise), ``clicks`` (decaying impulse train) and ``chirps`` (short repeated
downward chirps). Every clip gets a random gain and a faint noise floor.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .audio import TARGET_RATE, write_wav

CLASSES = ("sweep", "am_noise", "clicks", "chirps")


def _sweep(t, rng):
    f0 = rng.uniform(200, 800)
    f1 = rng.uniform(2500, 6000)
    if rng.random() < 0.5:
        f0, f1 = f1, f0
    dur = t[-1] + 1 / TARGET_RATE
    phase = 2 * np.pi * (f0 * t + 0.5 * (f1 - f0) / dur * t ** 2)
    return np.sin(phase + rng.uniform(0, 2 * np.pi))


def _am_noise(t, rng):
    noise = rng.standard_normal(len(t))
    rate = rng.uniform(2, 8)
    depth = rng.uniform(0.6, 0.95)
    return noise * (1 - depth * 0.5 * (1 + np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi))))


def _clicks(t, rng):
    x = np.zeros(len(t))
    rate = rng.uniform(6, 15)
    tau = rng.uniform(0.001, 0.003)
    k = np.arange(int(0.03 * TARGET_RATE))
    click = np.exp(-k / (tau * TARGET_RATE)) * rng.choice([-1, 1], size=len(k))
    pos = rng.uniform(0, 1 / rate)
    while pos < t[-1]:
        i = int(pos * TARGET_RATE)
        seg = click[: len(x) - i]
        x[i: i + len(seg)] += seg
        pos += rng.uniform(0.8, 1.2) / rate
    return x


def _chirps(t, rng):
    x = np.zeros(len(t))
    period = rng.uniform(0.25, 0.45)
    length = rng.uniform(0.08, 0.15)
    f_hi = rng.uniform(3000, 5000)
    f_lo = rng.uniform(800, 1500)
    tc = np.arange(int(length * TARGET_RATE)) / TARGET_RATE
    k = np.log(f_lo / f_hi) / length
    chirp = np.sin(2 * np.pi * f_hi * (np.exp(k * tc) - 1) / k) * np.hanning(len(tc))
    pos = rng.uniform(0, period)
    while pos < t[-1]:
        i = int(pos * TARGET_RATE)
        seg = chirp[: len(x) - i]
        x[i: i + len(seg)] += seg
        pos += period
    return x


_GENERATORS = {"sweep": _sweep, "am_noise": _am_noise, "clicks": _clicks, "chirps": _chirps}


def synth_clip(label: str, rng: np.random.Generator, duration: float = 1.5) -> np.ndarray:
    t = np.arange(int(round(duration * TARGET_RATE))) / TARGET_RATE
    x = _GENERATORS[label](t, rng)
    x = x / (np.max(np.abs(x)) + 1e-12)
    x = x + 0.01 * rng.standard_normal(len(t))
    return rng.uniform(0.3, 0.9) * x / np.max(np.abs(x))


def make_dataset(out_dir, n_per_class: int = 10, n_folds: int = 5, seed: int = 0,
                 duration: float = 1.5, classes=CLASSES) -> Path:
    """Write WAV clips plus ``manifest.csv`` (path,label,fold); return the manifest path.

    Folds are stratified: the k-th clip of each class goes to fold ``k % n_folds + 1``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows = []
    for label in classes:
        for k in range(n_per_class):
            name = f"{label}_{k:03d}.wav"
            write_wav(out_dir / name, synth_clip(label, rng, duration), TARGET_RATE)
            rows.append((name, label, k % n_folds + 1))
    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "label", "fold"])
        w.writerows(rows)
    return manifest
