"""Frame-level vocal-tract features: framing, Hamming windowing, Mel filterbank,
MFCC, and delta / delta-delta dynamics.

Pipeline per frame: Hamming window -> magnitude spectrum (FFT zero-padded to the
next power of two) -> power spectrum -> 26 triangular Mel filters over
0..Nyquist (HTK scale, mel = 2595*log10(1 + f/700)) -> natural log with a
1e-10 floor -> orthonormal DCT-II -> first 13 coefficients, c0 included.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from .audio_io import Waveform
from .errors import LengthError

LOG_FLOOR = 1e-10
KIND_DIMS = {"MFCC13": 13, "MFCC39": 39, "RMFCC39": 39, "MPDSS25": 25}


@dataclass(frozen=True)
class FrameGrid:
    """Analysis grid: 25 ms frames every 10 ms by default, Hamming windowed."""

    frame_len_samples: int
    frame_shift_samples: int
    window: str = "hamming"

    def __post_init__(self):
        if self.frame_len_samples <= 0 or self.frame_shift_samples <= 0:
            raise ValueError("frame length and shift must be positive")
        if self.frame_shift_samples > self.frame_len_samples:
            raise ValueError("frame shift must not exceed frame length")
        if self.window not in ("hamming", "rectangular"):
            raise ValueError(f"unknown window {self.window!r}")

    @classmethod
    def for_rate(cls, sample_rate_hz: int, frame_ms: float = 25.0,
                 shift_ms: float = 10.0, window: str = "hamming") -> "FrameGrid":
        return cls(
            frame_len_samples=int(round(frame_ms * 1e-3 * sample_rate_hz)),
            frame_shift_samples=int(round(shift_ms * 1e-3 * sample_rate_hz)),
            window=window,
        )

    def frame_count(self, n_samples: int) -> int:
        if n_samples < self.frame_len_samples:
            raise LengthError("signal shorter than one frame")
        return (n_samples - self.frame_len_samples) // self.frame_shift_samples + 1

    def window_values(self) -> np.ndarray:
        if self.window == "hamming":
            return np.hamming(self.frame_len_samples)
        return np.ones(self.frame_len_samples)


@dataclass(frozen=True)
class FeatureMatrix:
    """frames x dim matrix with a kind tag naming the column semantics."""

    data: np.ndarray
    kind: str
    frame_shift_s: float = 0.01

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 2:
            raise ValueError("feature data must be 2-D (frames x dim)")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature data contains non-finite values")
        expected = KIND_DIMS.get(self.kind)
        if expected is not None and data.shape[1] != expected:
            raise ValueError(f"kind {self.kind} expects dim {expected}, got {data.shape[1]}")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def concat_features(parts: list[FeatureMatrix]) -> FeatureMatrix:
    """Column-concatenate per-frame features of equal frame count."""
    if not parts:
        raise ValueError("need at least one feature matrix")
    n = parts[0].n_frames
    for p in parts:
        if p.n_frames != n:
            raise ValueError("frame counts differ across concatenated features")
    kind = "CONCAT:" + "+".join(p.kind for p in parts)
    return FeatureMatrix(np.hstack([p.data for p in parts]), kind, parts[0].frame_shift_s)


def frame_signal(w: Waveform, grid: FrameGrid) -> np.ndarray:
    """Slice the waveform into windowed frames, shape (count, frame_len)."""
    count = grid.frame_count(len(w.samples))
    idx = (np.arange(grid.frame_len_samples)[None, :]
           + grid.frame_shift_samples * np.arange(count)[:, None])
    return w.samples[idx] * grid.window_values()[None, :]


def next_pow2(n: int) -> int:
    size = 1
    while size < n:
        size *= 2
    return size


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, n_fft: int, sample_rate_hz: int,
                   f_low: float = 0.0, f_high: float | None = None) -> np.ndarray:
    """Triangular filters evaluated at FFT bin frequencies, shape (n_filters, n_fft//2+1)."""
    if f_high is None:
        f_high = sample_rate_hz / 2.0
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(f_low), hz_to_mel(f_high), n_filters + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * sample_rate_hz / n_fft
    fbank = np.zeros((n_filters, len(bin_hz)))
    for m in range(n_filters):
        lo, mid, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        up = (bin_hz - lo) / (mid - lo)
        down = (hi - bin_hz) / (hi - mid)
        fbank[m] = np.maximum(0.0, np.minimum(up, down))
    return fbank


def power_spectra(frames: np.ndarray, n_fft: int) -> np.ndarray:
    spectra = np.fft.rfft(frames, n=n_fft, axis=1)
    return (np.abs(spectra) ** 2) / n_fft


def mfcc(w: Waveform, grid: FrameGrid | None = None, n_coeffs: int = 13,
         n_mels: int = 26, pre_emphasis: float = 0.0) -> FeatureMatrix:
    """13-dimensional MFCCs (c0 retained) on the 25 ms / 10 ms Hamming grid."""
    if grid is None:
        grid = FrameGrid.for_rate(w.sample_rate_hz)
    if n_mels < n_coeffs:
        raise ValueError("need at least as many Mel filters as cepstral coefficients")
    samples = w.samples
    if pre_emphasis > 0.0:
        samples = np.concatenate([samples[:1], samples[1:] - pre_emphasis * samples[:-1]])
        w = Waveform(samples, w.sample_rate_hz)
    frames = frame_signal(w, grid)
    n_fft = next_pow2(grid.frame_len_samples)
    power = power_spectra(frames, n_fft)
    fbank = mel_filterbank(n_mels, n_fft, w.sample_rate_hz)
    energies = power @ fbank.T
    log_e = np.log(np.maximum(energies, LOG_FLOOR))
    ceps = dct(log_e, type=2, norm="ortho", axis=1)[:, :n_coeffs]
    kind = "MFCC13" if n_coeffs == 13 else f"MFCC{n_coeffs}"
    shift_s = grid.frame_shift_samples / w.sample_rate_hz
    return FeatureMatrix(ceps, kind, shift_s)


def _delta(data: np.ndarray, k: int = 2) -> np.ndarray:
    """Regression delta over +-k frames with replicated boundary frames."""
    n = data.shape[0]
    denom = 2.0 * sum(i * i for i in range(1, k + 1))
    padded = np.vstack([data[:1]] * k + [data] + [data[-1:]] * k)
    out = np.zeros_like(data)
    for i in range(1, k + 1):
        out += i * (padded[k + i:k + i + n] - padded[k - i:k - i + n])
    return out / denom


def add_deltas(f: FeatureMatrix) -> FeatureMatrix:
    """Append delta and delta-delta columns: [static, d, dd]."""
    d1 = _delta(f.data)
    d2 = _delta(d1)
    data = np.hstack([f.data, d1, d2])
    kind = {"MFCC13": "MFCC39", "RMFCC13": "RMFCC39"}.get(f.kind, f.kind + "+DD")
    return FeatureMatrix(data, kind, f.frame_shift_s)


def mfcc_with_deltas(w: Waveform, grid: FrameGrid | None = None,
                     pre_emphasis: float = 0.0) -> FeatureMatrix:
    return add_deltas(mfcc(w, grid, pre_emphasis=pre_emphasis))
