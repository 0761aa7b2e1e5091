"""Audio clips: WAV I/O, peak normalization, resampling and deformations.

Deformations follow the usual recipe for environmental sound augmentation:
a phase vocoder (Hann window 2048, hop 512, identity phase locking) for
time stretching, and stretch-then-resample for pitch shifting.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import EmptyAudio, MalformedWav, UnsupportedEncoding

TARGET_RATE = 44100

STRETCH_RATES = (0.81, 0.93, 1.07, 1.23)
PITCH_SEMITONES = (-2, -1, 1, 2)

PV_N_FFT = 2048
PV_HOP = 512
RESAMPLE_TAPS = 32

_FMT_PCM = 1
_FMT_FLOAT = 3
_FMT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


class DeformKind(str, Enum):
    TIME_STRETCH = "stretch"
    PITCH_SHIFT = "shift"


@dataclass(frozen=True)
class DeformSpec:
    kind: DeformKind
    value: float  # stretch rate, or semitones for PitchShift

    def __post_init__(self):
        if self.kind is DeformKind.TIME_STRETCH and not self.value > 0:
            raise ValueError("time-stretch rate must be positive")
        if self.kind is DeformKind.PITCH_SHIFT and abs(self.value) > 12:
            raise ValueError("pitch shift limited to +/-12 semitones")

    @property
    def tag(self) -> str:
        return f"{self.kind.value}{self.value:+g}"


DEFAULT_DEFORMATIONS = tuple(
    [DeformSpec(DeformKind.TIME_STRETCH, r) for r in STRETCH_RATES]
    + [DeformSpec(DeformKind.PITCH_SHIFT, s) for s in PITCH_SEMITONES]
)


# --------------------------------------------------------------------------
# WAV I/O

def _iter_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8: pos + 8 + size]
        if len(body) < size and cid != b"data":
            raise MalformedWav(f"truncated {cid!r} chunk")
        yield cid, body
        pos += 8 + size + (size & 1)


def load_wav(path, source_id: str | None = None) -> AudioClip:
    """Read a PCM16 or float32 RIFF/WAVE file, downmixing to mono.

    16-bit samples are scaled by 1/32768; stereo is averaged per frame.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedWav(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    for cid, body in _iter_chunks(data):
        if cid == b"fmt ":
            if len(body) < 16:
                raise MalformedWav(f"{path}: short fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body)
            if fmt[0] == _FMT_EXTENSIBLE:
                if len(body) < 26:
                    raise MalformedWav(f"{path}: short extensible fmt chunk")
                sub = struct.unpack_from("<H", body, 24)[0]
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            payload = body
    if fmt is None or payload is None:
        raise MalformedWav(f"{path}: missing fmt or data chunk")

    tag, channels, rate, _, block_align, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedEncoding(f"{path}: {channels} channels")
    if tag == _FMT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == _FMT_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedEncoding(f"{path}: format tag {tag}, {bits} bits")
    if rate <= 0 or block_align != channels * dtype.itemsize:
        raise MalformedWav(f"{path}: inconsistent fmt chunk")

    n_frames = len(payload) // block_align
    if n_frames == 0:
        raise EmptyAudio(f"{path}: zero frames")
    raw = np.frombuffer(payload[: n_frames * block_align], dtype=dtype)
    x = raw.astype(np.float64).reshape(n_frames, channels) * scale
    samples = x.mean(axis=1) if channels == 2 else x[:, 0]
    return AudioClip(samples, int(rate), source_id if source_id is not None else path.stem)


def write_wav(path, samples, sample_rate: int, encoding: str = "pcm16") -> None:
    """Write mono or (n, 2) stereo samples as PCM16 or float32 WAV."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    channels = x.shape[1]
    if encoding == "pcm16":
        tag, bits = _FMT_PCM, 16
        payload = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
    elif encoding == "float32":
        tag, bits = _FMT_FLOAT, 32
        payload = x.astype("<f4").tobytes()
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", tag, channels, sample_rate, sample_rate * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


# --------------------------------------------------------------------------
# Amplitude and rate

def normalize(clip: AudioClip) -> AudioClip:
    peak = np.max(np.abs(clip.samples)) if len(clip.samples) else 0.0
    if peak == 0:
        return clip
    return replace(clip, samples=clip.samples / peak)


def _resample_ratio(x: np.ndarray, ratio: float, out_len: int | None = None) -> np.ndarray:
    """Hann-windowed sinc interpolation onto a grid ``ratio`` times as dense."""
    x = np.asarray(x, dtype=np.float64)
    if out_len is None:
        out_len = int(round(len(x) * ratio))
    half = RESAMPLE_TAPS // 2
    cutoff = min(1.0, ratio)
    offsets = np.arange(-half + 1, half + 1)
    padded = np.concatenate([np.zeros(half), x, np.zeros(half + 1)])
    out = np.empty(out_len)
    step = 1 << 15
    for start in range(0, out_len, step):
        pos = np.arange(start, min(start + step, out_len)) / ratio
        base = np.floor(pos).astype(np.int64)
        idx = base[:, None] + offsets[None, :]
        d = pos[:, None] - idx
        kernel = cutoff * np.sinc(cutoff * d) * (0.5 + 0.5 * np.cos(np.pi * d / half))
        src = np.clip(idx + half, 0, len(padded) - 1)
        out[start: start + len(pos)] = np.sum(kernel * padded[src], axis=1)
    return out


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == clip.sample_rate:
        return replace(clip, samples=clip.samples.copy())
    out_len = int(round(len(clip.samples) * target_rate / clip.sample_rate))
    y = _resample_ratio(clip.samples, target_rate / clip.sample_rate, out_len)
    return replace(clip, samples=y, sample_rate=int(target_rate))


# --------------------------------------------------------------------------
# Phase vocoder

def _pv_stft(x: np.ndarray, window: np.ndarray) -> np.ndarray:
    n_fft = len(window)
    pad = n_fft // 2
    n_frames = 1 + int(np.ceil(len(x) / PV_HOP))
    total = (n_frames - 1) * PV_HOP + n_fft
    xp = np.zeros(total)
    xp[pad: pad + len(x)] = x
    frames = np.lib.stride_tricks.sliding_window_view(xp, n_fft)[::PV_HOP][:n_frames]
    return np.fft.rfft(frames * window, axis=1)


def _peak_owner(mag: np.ndarray) -> np.ndarray:
    """Map every bin to the spectral peak whose region of influence holds it."""
    n = len(mag)
    is_peak = np.zeros(n, dtype=bool)
    is_peak[1:-1] = (mag[1:-1] > mag[:-2]) & (mag[1:-1] >= mag[2:])
    peaks = np.flatnonzero(is_peak)
    if len(peaks) == 0:
        return np.arange(n)
    bounds = (peaks[:-1] + peaks[1:]) / 2.0
    return peaks[np.searchsorted(bounds, np.arange(n), side="right")]


def _phase_vocoder(x: np.ndarray, rate: float) -> np.ndarray:
    window = np.hanning(PV_N_FFT + 1)[:-1]
    spec = _pv_stft(x, window)
    n_frames, n_bins = spec.shape
    spec = np.vstack([spec, np.zeros((1, n_bins), dtype=spec.dtype)])
    mags = np.abs(spec)
    phases = np.angle(spec)
    omega = 2 * np.pi * PV_HOP * np.arange(n_bins) / PV_N_FFT

    steps = np.arange(0, n_frames, rate)
    out_len = int(round(len(x) / rate))
    total = (len(steps) - 1) * PV_HOP + PV_N_FFT
    y = np.zeros(max(total, out_len + PV_N_FFT))
    norm = np.zeros_like(y)
    win_sq = window ** 2

    acc = phases[0].copy()
    for k, t in enumerate(steps):
        i = int(t)
        frac = t - i
        mag = (1 - frac) * mags[i] + frac * mags[i + 1]
        owner = _peak_owner(mag)
        # identity phase locking: bins inherit their peak's phase offset
        out_phase = acc[owner] + phases[i] - phases[i][owner]
        frame = np.fft.irfft(mag * np.exp(1j * out_phase), n=PV_N_FFT) * window
        start = k * PV_HOP
        y[start: start + PV_N_FFT] += frame
        norm[start: start + PV_N_FFT] += win_sq

        dphi = phases[i + 1] - phases[i] - omega
        dphi -= 2 * np.pi * np.round(dphi / (2 * np.pi))
        acc += omega + dphi

    nz = norm > 1e-8
    y[nz] /= norm[nz]
    pad = PV_N_FFT // 2
    return y[pad: pad + out_len]


def time_stretch(clip: AudioClip, rate: float) -> AudioClip:
    """Change duration by 1/rate while preserving pitch."""
    if not 0.5 <= rate <= 2.0:
        raise ValueError(f"stretch rate {rate} outside [0.5, 2.0]")
    if rate == 1.0:
        return replace(clip, samples=clip.samples.copy())
    return replace(clip, samples=_phase_vocoder(clip.samples, rate))


def pitch_shift(clip: AudioClip, semitones: float) -> AudioClip:
    """Scale all frequencies by 2**(semitones/12), keeping the sample count."""
    if abs(semitones) > 12:
        raise ValueError("pitch shift limited to +/-12 semitones")
    if semitones == 0:
        return replace(clip, samples=clip.samples.copy())
    rate = 2.0 ** (-semitones / 12.0)
    n = len(clip.samples)
    stretched = _phase_vocoder(clip.samples, rate)
    return replace(clip, samples=_resample_ratio(stretched, rate, out_len=n))


def deform(clip: AudioClip, spec: DeformSpec) -> AudioClip:
    if spec.kind is DeformKind.TIME_STRETCH:
        out = time_stretch(clip, spec.value)
    else:
        out = pitch_shift(clip, spec.value)
    return replace(out, source_id=f"{clip.source_id}__{spec.tag}")


def prepare(clip: AudioClip, rate: int = TARGET_RATE) -> AudioClip:
    """Resample to the working rate and peak-normalize."""
    return normalize(resample(clip, rate))
