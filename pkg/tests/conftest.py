import numpy as np
import pytest

from escnet.audio import AudioClip

SR = 44100


def direct_dft(x, n_bins=None):
    """O(N * bins) DFT evaluated straight from the definition."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    k = np.arange(n // 2 + 1 if n_bins is None else n_bins)
    t = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, t) / n) @ x


def dft_peak_hz(y, sr=SR, n=8192, f_max=4000.0):
    """Peak frequency of the central n samples by direct DFT, plus the bin width."""
    mid = len(y) // 2
    seg = y[mid - n // 2: mid + n // 2]
    bins = int(f_max * n / sr)
    mag = np.abs(direct_dft(seg, bins))
    return np.argmax(mag) * sr / n, sr / n


def sine(freq, seconds, sr=SR, amp=0.5):
    t = np.arange(int(round(seconds * sr))) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), sr, f"sine{freq}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------- acceptance report

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance_record():
    """Record one criterion outcome; lines are printed in the terminal summary."""
    def record(number, title, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title}"
        _ACCEPTANCE[number] = line + (f" ({detail})" if detail else "")
        print(_ACCEPTANCE[number])
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
