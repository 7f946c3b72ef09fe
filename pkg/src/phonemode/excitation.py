"""Excitation-source analysis: zero-frequency filtering, epoch extraction,
sentence-level pitch / epoch-strength contours, linear prediction, the LP
residual, and the residual-domain features (MPDSS, RMFCC).

Zero-frequency filtering passes the differenced signal twice through a
resonator at 0 Hz (y[n] = 2 y[n-1] - y[n-2] + x[n], i.e. a double
integrator), then removes the polynomial trend by subtracting a local mean
three times.  The mean window is 1.5x the average pitch period, which is
estimated from the autocorrelation peak of the whole signal inside the
50-500 Hz lag band.  Negative-to-positive zero crossings of the result mark
epochs (instants of significant excitation); the sample-to-sample rise at
the crossing is the epoch strength.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .audio_io import Waveform
from .errors import ContourLengthError, LengthError
from .spectral import (
    FeatureMatrix,
    FrameGrid,
    add_deltas,
    frame_signal,
    mel_to_hz,
    hz_to_mel,
    mfcc,
    next_pow2,
    power_spectra,
)

PITCH_MIN_HZ = 50.0
PITCH_MAX_HZ = 500.0
VOICING_WINDOW_S = 0.100
CONTOUR_POINTS = 500
CONTOUR_SHIFT_S = 0.010
# epochs weaker than this fraction of the utterance median are treated as
# unvoiced-region artifacts when building contours
VOICING_STRENGTH_RATIO = 0.3


@dataclass(frozen=True)
class EpochSet:
    """Epoch sample indices (strictly increasing) and their strengths (> 0)."""

    locations: np.ndarray
    strengths: np.ndarray

    def __post_init__(self):
        locations = np.asarray(self.locations, dtype=np.int64)
        strengths = np.asarray(self.strengths, dtype=np.float64)
        object.__setattr__(self, "locations", locations)
        object.__setattr__(self, "strengths", strengths)
        if locations.shape != strengths.shape:
            raise ValueError("locations and strengths must have equal length")
        if locations.size > 1 and not np.all(np.diff(locations) > 0):
            raise ValueError("epoch locations must be strictly increasing")
        if np.any(strengths <= 0):
            raise ValueError("epoch strengths must be positive")

    def __len__(self) -> int:
        return int(self.locations.size)


@dataclass(frozen=True)
class Contour:
    """Fixed-length sentence-level sequence; pitch in Hz or normalized strength."""

    values: np.ndarray
    kind: str  # "pitch" | "epoch_strength"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if self.kind not in ("pitch", "epoch_strength"):
            raise ValueError(f"unknown contour kind {self.kind!r}")

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class LpModel:
    """Forward-predictor coefficients a[1..order] with s_hat[n] = sum a_k s[n-k]."""

    order: int
    coefficients: np.ndarray
    gain: float  # final prediction-error energy
    reflection: np.ndarray | None = None

    def inverse_filter_taps(self) -> np.ndarray:
        return np.concatenate(([1.0], -np.asarray(self.coefficients)))


def average_pitch_period(samples: np.ndarray, rate: int) -> int:
    """Autocorrelation-peak period estimate restricted to the 50-500 Hz band.

    The signal is band-limited to the pitch band first (formant ringing must
    not win the peak).  Among the local maxima in the lag band reaching 85%
    of the band maximum, the LONGEST lag wins: overestimating the period
    leaves the zero-frequency trend window recoverable from the observed
    crossing spacing, while underestimating (locking onto a harmonic) floods
    the output with sub-period crossings that look self-consistent.
    """
    lag_min = max(2, int(rate / PITCH_MAX_HZ))
    lag_max = int(rate / PITCH_MIN_HZ)
    if len(samples) <= lag_max:
        raise LengthError("signal too short to estimate an average pitch period")
    x = samples - np.mean(samples)
    n_fft = 2 * next_pow2(len(x))
    spec = np.fft.rfft(x, n=n_fft)
    cutoff_bin = int(PITCH_MAX_HZ * n_fft / rate) + 1
    spec[cutoff_bin:] = 0.0
    acf = np.fft.irfft(spec * np.conj(spec), n=n_fft)[:lag_max + 2]
    band = acf[lag_min:lag_max + 1]
    best = float(np.max(band))
    if best <= 0.0:
        return int(rate / 160.0)  # aperiodic or silent: nominal 160 Hz period
    peaks = np.flatnonzero(
        (band[1:-1] >= band[:-2]) & (band[1:-1] >= band[2:]) & (band[1:-1] >= 0.85 * best))
    if peaks.size:
        return int(lag_min + 1 + peaks[-1])
    return int(lag_min + np.argmax(band))


def _local_mean(x: np.ndarray, win: int) -> np.ndarray:
    """Centered moving average, edge bins normalized by the actual overlap."""
    kernel = np.ones(win)
    sums = np.convolve(x, kernel, mode="same")
    counts = np.convolve(np.ones_like(x), kernel, mode="same")
    return sums / counts


def _zff_filter(samples: np.ndarray, trend_window: int) -> np.ndarray:
    x = np.diff(samples, prepend=samples[0])
    y = x
    for _ in range(2):  # two passes through the 0 Hz resonator = double cumsum each
        y = np.cumsum(np.cumsum(y))
    for _ in range(3):
        y = y - _local_mean(y, trend_window)
    return y


def zff(w: Waveform, trend_window: int | None = None) -> np.ndarray:
    """Zero-frequency filtered signal; same length as the input.

    When no window is given, the trend window starts at 1.5x the
    autocorrelation period estimate and is re-derived once from the median
    spacing of the first pass's zero crossings: the global autocorrelation
    can lock onto a period multiple when the pitch drifts, and a bad window
    smears epochs away entirely.
    """
    if len(w.samples) < 3:
        raise LengthError("need at least 3 samples for zero-frequency filtering")
    rate = w.sample_rate_hz
    if trend_window is not None:
        window = max(3, int(trend_window)) | 1  # odd keeps the mean zero-phase
        if window > len(w.samples):
            raise LengthError("trend-removal window exceeds the signal length")
        return _zff_filter(w.samples, window)

    period = float(average_pitch_period(w.samples, rate))
    window = (max(3, int(round(1.5 * period)))) | 1
    if window > len(w.samples):
        raise LengthError("trend-removal window exceeds the signal length")
    z = _zff_filter(w.samples, window)
    for _ in range(3):  # walk the window down to 1.5x the observed spacing
        crossings = np.flatnonzero((z[:-1] < 0.0) & (z[1:] >= 0.0))
        spacing = np.diff(crossings)
        in_band = spacing[(spacing >= rate / PITCH_MAX_HZ) & (spacing <= rate / PITCH_MIN_HZ)]
        if len(in_band) < 10:
            break
        observed = float(np.median(in_band))
        if abs(observed - period) / period <= 0.1:
            break
        refit = (max(3, int(round(1.5 * observed)))) | 1
        if refit > len(w.samples):
            break
        period = observed
        z = _zff_filter(w.samples, refit)
    return z


def extract_epochs(zff_signal: np.ndarray, speech: Waveform | None = None,
                   refine_window_s: float = 0.001) -> EpochSet:
    """Epochs at negative-to-positive zero crossings; strength is the local rise.

    The crossing instant is interpolated between the bracketing samples.
    When the speech signal is supplied, each crossing is additionally snapped
    to the deepest LP-residual trough within +-1 ms: the vocal tract's
    low-frequency phase delay shifts the raw crossings by a few samples,
    while the glottal-closure discontinuity stays pinned in the residual.
    """
    z = np.asarray(zff_signal, dtype=np.float64)
    crossing = np.flatnonzero((z[:-1] < 0.0) & (z[1:] >= 0.0))
    strengths = z[crossing + 1] - z[crossing]
    keep = strengths > 0.0
    crossing = crossing[keep]
    strengths = strengths[keep]
    fraction = -z[crossing] / strengths
    locations = np.rint(crossing + fraction).astype(np.int64)
    if speech is not None and len(locations):
        grid = FrameGrid.for_rate(speech.sample_rate_hz)
        if len(speech.samples) >= grid.frame_len_samples:
            residual = lp_residual(speech, grid=grid).samples
            half = max(1, int(round(refine_window_s * speech.sample_rate_hz)))
            refined = np.empty_like(locations)
            for i, loc in enumerate(locations):
                lo = max(0, loc - half)
                hi = min(len(residual), loc + half + 1)
                refined[i] = lo + int(np.argmin(residual[lo:hi]))
            locations = refined
    if len(locations) > 1:  # interpolation/refinement may collide neighbors
        uniq = np.concatenate(([True], np.diff(locations) > 0))
        locations = locations[uniq]
        strengths = strengths[uniq]
    return EpochSet(locations, strengths)


def _contour_grid(w_len: int, rate: int, n_points: int) -> np.ndarray:
    shift = int(round(CONTOUR_SHIFT_S * rate))
    if w_len != n_points * shift:
        raise ContourLengthError(
            f"waveform of {w_len} samples does not map onto {n_points} "
            f"points at a {shift}-sample shift")
    return (np.arange(n_points) + 0.5) * shift  # bin centers, fractional samples


def _voiced_epochs(epochs: EpochSet) -> EpochSet:
    """Drop epochs far weaker than the utterance median (noise-region crossings)."""
    if len(epochs) == 0:
        return epochs
    median = float(np.median(epochs.strengths))
    keep = epochs.strengths >= VOICING_STRENGTH_RATIO * median
    return EpochSet(epochs.locations[keep], epochs.strengths[keep])


def pitch_contour(epochs: EpochSet, w_len: int, rate: int,
                  n_points: int = CONTOUR_POINTS) -> Contour:
    """Pitch (reciprocal of the local epoch period) every 10 ms.

    Each grid point is parametrized over a 100 ms analysis span: the point is
    voiced when at least one consecutive epoch pair falls inside the span, no
    interval in it leaves the 50-500 Hz band, and the mean period maps into
    the band; everywhere else the contour is 0.  Averaging the intervals in
    the span rather than reading a single period keeps the value free of
    one-sample period quantization.  Epochs failing the relative-strength
    voicing gate never pair.
    """
    epochs = _voiced_epochs(epochs)
    centers = _contour_grid(w_len, rate, n_points)
    values = np.zeros(n_points)
    locs = epochs.locations
    if len(locs) >= 2:
        half = VOICING_WINDOW_S * rate / 2.0
        max_interval = rate / PITCH_MIN_HZ
        lo = np.searchsorted(locs, centers - half, side="left")
        hi = np.searchsorted(locs, centers + half, side="right")
        for i in range(n_points):
            a, b = lo[i], hi[i]
            if b - a < 2:
                continue
            span = locs[a:b]
            intervals = np.diff(span)
            if np.max(intervals) > max_interval:
                continue  # the span crosses an unvoiced gap
            pitch = rate * (len(span) - 1) / float(span[-1] - span[0])
            if PITCH_MIN_HZ <= pitch <= PITCH_MAX_HZ:
                values[i] = pitch
    return Contour(values, "pitch")


STRENGTH_OUTLIER_FACTOR = 10.0  # ZFF spikes at edges/joins are not epochs


def epoch_strength_contour(epochs: EpochSet, w_len: int, rate: int,
                           n_points: int = CONTOUR_POINTS) -> Contour:
    """Mean epoch strength per 10 ms bin, max-normalized to [0, 1].

    Strengths beyond 10x the utterance median are edge or splice artifacts
    and are dropped before binning.
    """
    _contour_grid(w_len, rate, n_points)  # validates the length contract
    shift = int(round(CONTOUR_SHIFT_S * rate))
    values = np.zeros(n_points)
    epochs = _voiced_epochs(epochs)
    if len(epochs):
        strengths = epochs.strengths
        locations = epochs.locations
        median = float(np.median(strengths))
        keep = strengths <= STRENGTH_OUTLIER_FACTOR * median
        strengths = strengths[keep]
        locations = locations[keep]
        bins = np.minimum(locations // shift, n_points - 1)
        sums = np.bincount(bins, weights=strengths, minlength=n_points)
        counts = np.bincount(bins, minlength=n_points)
        voiced = counts > 0
        values[voiced] = sums[voiced] / counts[voiced]
        peak = values.max()
        if peak > 0:
            values /= peak
    return Contour(values, "epoch_strength")


def autocorrelation(frame: np.ndarray, max_lag: int) -> np.ndarray:
    n = len(frame)
    spec = np.fft.rfft(frame, n=2 * next_pow2(n))
    acf = np.fft.irfft(spec * np.conj(spec))
    return acf[:max_lag + 1].copy()


def lp_analysis(frame: np.ndarray, order: int = 10) -> LpModel:
    """Autocorrelation-method LP via the Levinson-Durbin recursion.

    Returns forward-predictor coefficients (so an AR process generated with
    known coefficients is recovered with matching sign) plus the final
    prediction-error energy and the reflection coefficients.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if order < 0:
        raise ValueError("order must be non-negative")
    if len(frame) <= order:
        raise LengthError("frame must be longer than the LP order")
    r = autocorrelation(frame, order)
    if r[0] <= 0.0:
        return LpModel(order, np.zeros(order), 0.0, np.zeros(order))

    a = np.zeros(order)  # predictor coefficients, s_hat[n] = sum a_k s[n-k]
    k = np.zeros(order)
    err = r[0]
    for i in range(1, order + 1):
        acc = r[i] - np.dot(a[:i - 1], r[i - 1:0:-1])
        k_i = acc / err
        k[i - 1] = k_i
        new_a = a.copy()
        new_a[i - 1] = k_i
        new_a[:i - 1] = a[:i - 1] - k_i * a[:i - 1][::-1]
        a = new_a
        err *= (1.0 - k_i * k_i)
    return LpModel(order, a, float(err), k)


def lp_residual(w: Waveform, order: int = 10, grid: FrameGrid | None = None) -> Waveform:
    """Inverse-filter the signal with per-frame LP models.

    Each analysis frame is Hamming-windowed for the autocorrelation fit; its
    coefficients then inverse-filter the shift-length segment the frame owns,
    with the true signal history as filter memory, so the residual keeps the
    input length and no overlap double-counting occurs.
    """
    if grid is None:
        grid = FrameGrid.for_rate(w.sample_rate_hz)
    frames = frame_signal(w, grid)
    n = len(w.samples)
    shift = grid.frame_shift_samples
    residual = np.zeros(n)
    for i in range(frames.shape[0]):
        model = lp_analysis(frames[i], order)
        start = i * shift
        stop = n if i == frames.shape[0] - 1 else min(n, start + shift)
        seg_from = max(0, start - order)
        taps = model.inverse_filter_taps()
        filtered = lfilter(taps, [1.0], w.samples[seg_from:stop])
        residual[start:stop] = filtered[start - seg_from:]
    return Waveform(residual, w.sample_rate_hz)


def mel_band_bins(n_bands: int, n_fft: int, rate: int) -> list[np.ndarray]:
    """FFT bin indices inside each triangular Mel band (the triangle support)."""
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(rate / 2.0), n_bands + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * rate / n_fft
    bands = []
    for m in range(n_bands):
        members = np.flatnonzero((bin_hz >= edges_hz[m]) & (bin_hz <= edges_hz[m + 2]))
        if len(members) < 2:
            raise ValueError(
                f"Mel band {m} spans fewer than 2 FFT bins; "
                f"increase the FFT size or reduce the band count")
        bands.append(members)
    return bands


def pdss(power_band: np.ndarray) -> float:
    """1 - geometric/arithmetic mean of the band's power samples; in [0, 1]."""
    am = float(np.mean(power_band))
    if am <= 0.0:
        return 0.0
    if np.any(power_band <= 0.0):
        gm = 0.0
    else:
        gm = float(np.exp(np.mean(np.log(power_band))))
    return min(1.0, max(0.0, 1.0 - gm / am))


def mpdss(residual: Waveform, grid: FrameGrid | None = None,
          n_bands: int = 25) -> FeatureMatrix:
    """Per-frame spectral flatness of the residual inside 25 Mel bands."""
    if grid is None:
        grid = FrameGrid.for_rate(residual.sample_rate_hz)
    frames = frame_signal(residual, grid)
    n_fft = next_pow2(grid.frame_len_samples)
    power = power_spectra(frames, n_fft)
    bands = mel_band_bins(n_bands, n_fft, residual.sample_rate_hz)
    out = np.zeros((frames.shape[0], n_bands))
    for t in range(frames.shape[0]):
        row = power[t]
        for m, members in enumerate(bands):
            out[t, m] = pdss(row[members])
    kind = "MPDSS25" if n_bands == 25 else f"MPDSS{n_bands}"
    return FeatureMatrix(out, kind, grid.frame_shift_samples / residual.sample_rate_hz)


def rmfcc(residual: Waveform, grid: FrameGrid | None = None) -> FeatureMatrix:
    """MFCC + deltas computed on the LP residual signal (39 columns)."""
    base = mfcc(residual, grid)
    relabeled = FeatureMatrix(base.data, "RMFCC13", base.frame_shift_s)
    return add_deltas(relabeled)


def rmfcc_from_speech(w: Waveform, order: int = 10,
                      grid: FrameGrid | None = None) -> FeatureMatrix:
    return rmfcc(lp_residual(w, order, grid), grid)
