"""Log-mel / log-gammatone spectrogram features with deltas.

Pipeline for one clip::

    stft_power -> filterbank + log10 -> drop_silence -> segment -> delta

The result is a list of ``(128, 128, 2)`` tensors laid out as
(band, frame, channel); channel 0 is the log spectrogram, channel 1 its delta.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from .audio import AudioClip
from .errors import ClipTooShort, ShapeMismatch, TooFewFrames

N_FFT = 1024
HOP = 512
N_BANDS = 128
SEGMENT_FRAMES = 128
LOG_FLOOR = 1e-10
DELTA_WIDTH = 9
GAMMATONE_FMIN = 20.0


class BandType(str, Enum):
    MEL = "mel"
    GAMMATONE = "gt"


@dataclass(frozen=True)
class Filterbank:
    weights: np.ndarray  # (bands, n_fft // 2 + 1)
    kind: BandType
    f_min: float
    f_max: float
    centers: np.ndarray


@dataclass
class Spectrogram:
    values: np.ndarray  # (bands, frames), log10 power
    band_type: BandType
    frame_hop_s: float

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


@dataclass
class FeatureTensor:
    values: np.ndarray  # (128, 128, 2)
    clip_id: str
    segment_index: int


@dataclass(frozen=True)
class FeatureConfig:
    n_fft: int = N_FFT
    hop: int = HOP
    n_bands: int = N_BANDS
    silence_db: float = 60.0
    segment_frames: int = SEGMENT_FRAMES
    overlap: float = 0.5


# --------------------------------------------------------------------------
# STFT

@lru_cache(maxsize=4)
def _hamming(n: int) -> np.ndarray:
    # periodic Hamming
    return 0.54 - 0.46 * np.cos(2 * np.pi * np.arange(n) / n)


def stft_power(samples, window: int = N_FFT, hop: int = HOP) -> np.ndarray:
    """Squared-magnitude STFT, shape ``(window // 2 + 1, frames)``.

    Frames are not centred: ``frames = (len - window) // hop + 1``.
    """
    x = samples.samples if isinstance(samples, AudioClip) else np.asarray(samples, dtype=np.float64)
    if len(x) < window:
        raise ClipTooShort(f"need at least {window} samples, got {len(x)}")
    frames = np.lib.stride_tricks.sliding_window_view(x, window)[::hop]
    spec = np.fft.rfft(frames * _hamming(window), axis=1)
    return (spec.real ** 2 + spec.imag ** 2).T


# --------------------------------------------------------------------------
# Filterbanks

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def erb(f):
    """Equivalent rectangular bandwidth in Hz (Glasberg & Moore)."""
    return 24.7 * (4.37 * np.asarray(f, dtype=np.float64) / 1000.0 + 1.0)


def hz_to_erb_rate(f):
    return 21.4 * np.log10(1.0 + 4.37 * np.asarray(f, dtype=np.float64) / 1000.0)


def erb_rate_to_hz(e):
    return (10.0 ** (np.asarray(e, dtype=np.float64) / 21.4) - 1.0) * 1000.0 / 4.37


def _triangle_area(f, lo, mid, hi):
    """Cumulative area under a unit-height triangle (lo, mid, hi) up to f."""
    f = np.clip(f, lo, hi)
    rise = (f - lo) ** 2 / (2 * (mid - lo))
    fall = (hi - lo) / 2 - (hi - f) ** 2 / (2 * (hi - mid))
    return np.where(f <= mid, rise, fall)


@lru_cache(maxsize=8)
def mel_filterbank(n_bands: int = N_BANDS, sr: int = 44100, n_fft: int = N_FFT) -> Filterbank:
    """Triangular filters with centres uniform on the HTK mel scale.

    Each weight is the triangle's mean height over the bin's frequency
    interval, so narrow low-frequency filters still touch their nearest bin.
    """
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sr / 2), n_bands + 2))
    df = sr / n_fft
    bins = np.arange(n_fft // 2 + 1) * df
    a, b = bins - df / 2, bins + df / 2
    w = np.empty((n_bands, len(bins)))
    for k in range(n_bands):
        lo, mid, hi = edges[k], edges[k + 1], edges[k + 2]
        w[k] = (_triangle_area(b, lo, mid, hi) - _triangle_area(a, lo, mid, hi)) / df
    w.setflags(write=False)
    return Filterbank(w, BandType.MEL, 0.0, sr / 2, edges[1:-1])


@lru_cache(maxsize=8)
def gammatone_filterbank(n_bands: int = N_BANDS, sr: int = 44100, n_fft: int = N_FFT) -> Filterbank:
    """4th-order gammatone magnitude responses on an ERB-rate grid."""
    f_max = sr / 2
    centers = erb_rate_to_hz(np.linspace(hz_to_erb_rate(GAMMATONE_FMIN), hz_to_erb_rate(f_max), n_bands))
    bins = np.arange(n_fft // 2 + 1) * sr / n_fft
    bw = 1.019 * erb(centers)
    resp = (1.0 + ((bins[None, :] - centers[:, None]) / bw[:, None]) ** 2) ** -2
    resp /= resp.max(axis=1, keepdims=True)
    resp.setflags(write=False)
    return Filterbank(resp, BandType.GAMMATONE, GAMMATONE_FMIN, f_max, centers)


def get_filterbank(kind: BandType | str, n_bands: int = N_BANDS, sr: int = 44100,
                   n_fft: int = N_FFT) -> Filterbank:
    kind = BandType(kind)
    if kind is BandType.MEL:
        return mel_filterbank(n_bands, sr, n_fft)
    return gammatone_filterbank(n_bands, sr, n_fft)


def apply_filterbank_log(power: np.ndarray, fb: Filterbank, hop_s: float = HOP / 44100) -> Spectrogram:
    if power.ndim != 2 or power.shape[0] != fb.weights.shape[1]:
        raise ShapeMismatch(f"power has shape {power.shape}, filterbank expects {fb.weights.shape[1]} rows")
    return Spectrogram(np.log10(fb.weights @ power + LOG_FLOOR), fb.kind, hop_s)


# --------------------------------------------------------------------------
# Frame selection and segmentation

def drop_silence(spec: Spectrogram, threshold_db: float = 60.0) -> Spectrogram:
    """Drop frames whose mean band power sits > threshold_db below the loudest frame."""
    energy_db = 10.0 * np.log10(np.mean(10.0 ** spec.values, axis=0))
    keep = energy_db >= energy_db.max() - threshold_db
    if not keep.any():
        keep[np.argmax(energy_db)] = True
    return Spectrogram(spec.values[:, keep], spec.band_type, spec.frame_hop_s)


def segment(values: np.ndarray, length: int = SEGMENT_FRAMES, overlap: float = 0.5) -> list[np.ndarray]:
    """Cut (bands, frames) into fixed-length windows; short inputs are tiled."""
    if isinstance(values, Spectrogram):
        values = values.values
    n = values.shape[1]
    if n < length:
        reps = -(-length // n)
        return [np.tile(values, (1, reps))[:, :length]]
    hop = int(round(length * (1 - overlap)))
    count = (n - length) // hop + 1
    return [values[:, i * hop: i * hop + length] for i in range(count)]


def delta(seg: np.ndarray, width: int = DELTA_WIDTH) -> np.ndarray:
    """Regression delta along the frame axis with replicated edges."""
    n = width // 2
    if seg.shape[1] < width:
        raise TooFewFrames(f"delta needs at least {width} frames, got {seg.shape[1]}")
    padded = np.pad(seg, ((0, 0), (n, n)), mode="edge")
    frames = seg.shape[1]
    out = np.zeros_like(seg, dtype=np.float64)
    for k in range(1, n + 1):
        out += k * (padded[:, n + k: n + k + frames] - padded[:, n - k: n - k + frames])
    return out / (2 * sum(k * k for k in range(1, n + 1)))


# --------------------------------------------------------------------------
# Composition

def extract_spectrogram(clip: AudioClip, kind: BandType | str = BandType.MEL,
                        cfg: FeatureConfig = FeatureConfig()) -> Spectrogram:
    """STFT, filterbank, log and silence drop: everything before segmentation."""
    fb = get_filterbank(kind, cfg.n_bands, clip.sample_rate, cfg.n_fft)
    power = stft_power(clip.samples, cfg.n_fft, cfg.hop)
    spec = apply_filterbank_log(power, fb, cfg.hop / clip.sample_rate)
    return drop_silence(spec, cfg.silence_db)


def segments_from_spectrogram(values: np.ndarray, clip_id: str = "",
                              cfg: FeatureConfig = FeatureConfig()) -> list[FeatureTensor]:
    out = []
    for i, seg in enumerate(segment(values, cfg.segment_frames, cfg.overlap)):
        stacked = np.stack([seg, delta(seg)], axis=-1)
        out.append(FeatureTensor(stacked, clip_id, i))
    return out


def featurize(clip: AudioClip, kind: BandType | str = BandType.MEL,
              cfg: FeatureConfig = FeatureConfig()) -> list[FeatureTensor]:
    spec = extract_spectrogram(clip, kind, cfg)
    return segments_from_spectrogram(spec.values, clip.source_id, cfg)


@dataclass
class Standardizer:
    """Per-channel zero-mean / unit-variance scaling fitted on training segments."""

    mean: np.ndarray = field(default_factory=lambda: np.zeros(2))
    std: np.ndarray = field(default_factory=lambda: np.ones(2))

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        axes = tuple(range(x.ndim - 1))
        mean = x.mean(axis=axes, dtype=np.float64)
        std = x.std(axis=axes, dtype=np.float64)
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std)

    def transform(self, x: np.ndarray, dtype=np.float32) -> np.ndarray:
        return ((x - self.mean) / self.std).astype(dtype)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))
