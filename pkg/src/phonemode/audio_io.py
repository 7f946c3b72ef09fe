"""Audio loading, preprocessing, and the corpus manifest.

Audio is RIFF/WAVE, 16-bit signed little-endian PCM, mono.  Samples are
normalized to [-1, 1] by dividing by 32768 so that -32768 maps to -1 exactly.

The manifest is a UTF-8 text file, one record per line, tab-separated:

    audio_path  language  mode  speaker_id  split  transcript

where transcript is space-separated IPA phone labels or the literal ``-``
when absent.  Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import wave
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ChannelCountError,
    EmptyResultError,
    LengthError,
    ManifestError,
    ManifestWarning,
    TruncatedHeaderError,
    UnsupportedEncodingError,
)

CANONICAL_RATE = 16000
PCM_SCALE = 32768.0

KNOWN_LANGUAGES = ("telugu", "kannada", "odia", "bengali")
MODES = ("read", "conversation")
SPLITS = ("train", "dev", "test")


@dataclass(frozen=True)
class Waveform:
    """Mono PCM samples in [-1, 1] plus the header sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise LengthError("waveform must be a non-empty 1-D sample array")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class ManifestEntry:
    audio_path: str
    language: str
    mode: str
    speaker_id: str
    split: str
    transcript: tuple[str, ...] | None = None
    line_no: int = field(default=-1, compare=False)

    @property
    def utterance_id(self) -> str:
        return Path(self.audio_path).stem


def load_wav(path) -> Waveform:
    """Read a mono 16-bit PCM WAV file into a normalized Waveform."""
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            sampwidth = wf.getsampwidth()
            comptype = wf.getcomptype()
            rate = wf.getframerate()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except wave.Error as exc:
        msg = str(exc)
        if "unknown format" in msg or "not a WAVE file" in msg.lower():
            raise UnsupportedEncodingError(f"{path}: {msg}") from exc
        raise TruncatedHeaderError(f"{path}: {msg}") from exc
    except EOFError as exc:
        raise TruncatedHeaderError(f"{path}: unexpected end of file") from exc

    if comptype != "NONE":
        raise UnsupportedEncodingError(f"{path}: compressed WAV ({comptype}) not supported")
    if sampwidth != 2:
        raise UnsupportedEncodingError(f"{path}: expected 16-bit samples, got {8 * sampwidth}-bit")
    if n_channels != 1:
        raise ChannelCountError(f"{path}: expected mono, got {n_channels} channels")
    if n_frames == 0:
        raise LengthError(f"{path}: file holds no samples")

    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / PCM_SCALE, rate)


def to_pcm_bytes(w: Waveform) -> bytes:
    """Serialize samples back to 16-bit little-endian PCM (inverse of load_wav)."""
    ints = np.clip(np.rint(w.samples * PCM_SCALE), -32768, 32767).astype("<i2")
    return ints.tobytes()


def save_wav(path, w: Waveform) -> None:
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(w.sample_rate_hz)
        wf.writeframes(to_pcm_bytes(w))


def frame_energies(w: Waveform, frame_ms: float = 25.0, shift_ms: float = 10.0) -> np.ndarray:
    """Short-time energy on the standard 25 ms / 10 ms grid (no window)."""
    flen = int(round(frame_ms * 1e-3 * w.sample_rate_hz))
    shift = int(round(shift_ms * 1e-3 * w.sample_rate_hz))
    n = len(w.samples)
    if n < flen:
        return np.array([np.sum(w.samples**2)])
    count = (n - flen) // shift + 1
    idx = np.arange(flen)[None, :] + shift * np.arange(count)[:, None]
    return np.sum(w.samples[idx] ** 2, axis=1)


def silence_mask(w: Waveform, energy_threshold_ratio: float = 0.06,
                 frame_ms: float = 25.0, shift_ms: float = 10.0) -> np.ndarray:
    """Boolean per-sample keep mask: True where some above-threshold frame covers the sample.

    The threshold is energy_threshold_ratio times the mean frame energy.
    Frames overlap (25 ms span, 10 ms shift), so the kept region is the
    union of the spans of the kept frames.
    """
    if not 0.0 < energy_threshold_ratio < 1.0:
        raise ValueError("energy_threshold_ratio must lie in (0, 1)")
    flen = int(round(frame_ms * 1e-3 * w.sample_rate_hz))
    shift = int(round(shift_ms * 1e-3 * w.sample_rate_hz))
    energies = frame_energies(w, frame_ms, shift_ms)
    threshold = energy_threshold_ratio * float(np.mean(energies))
    mask = np.zeros(len(w.samples), dtype=bool)
    for i, e in enumerate(energies):
        if e > threshold:
            start = i * shift
            mask[start:start + flen] = True
    # tail samples not covered by any full frame follow the last frame's fate
    if len(energies) and energies[-1] > threshold:
        mask[(len(energies) - 1) * shift:] = True
    return mask


def remove_silence(w: Waveform, energy_threshold_ratio: float = 0.06) -> Waveform:
    """Drop frames whose short-time energy is below ratio * mean frame energy."""
    mask = silence_mask(w, energy_threshold_ratio)
    kept = w.samples[mask]
    if kept.size == 0:
        raise EmptyResultError("all frames fell below the silence threshold")
    return Waveform(kept, w.sample_rate_hz)


def chop_fixed(w: Waveform, duration_s: float = 5.0) -> Waveform:
    """Keep exactly the first duration_s seconds."""
    need = int(round(duration_s * w.sample_rate_hz))
    if len(w.samples) < need:
        raise LengthError(
            f"waveform is {w.duration_s:.3f} s, need at least {duration_s:.3f} s")
    return Waveform(w.samples[:need].copy(), w.sample_rate_hz)


def _parse_transcript(token: str) -> tuple[str, ...] | None:
    if token == "-":
        return None
    labels = tuple(token.split())
    if not labels:
        return None
    return labels


def parse_manifest_line(line: str, line_no: int) -> ManifestEntry:
    fields = line.rstrip("\n").split("\t")
    if len(fields) != 6:
        raise ManifestError(f"line {line_no}: expected 6 tab-separated fields, got {len(fields)}")
    audio_path, language, mode, speaker_id, split, transcript = fields
    if not audio_path:
        raise ManifestError(f"line {line_no}: empty audio_path")
    mode_l = mode.strip().lower()
    if mode_l not in MODES:
        raise ManifestError(f"line {line_no}: unknown mode token {mode!r}")
    split_l = split.strip().lower()
    if split_l not in SPLITS:
        raise ManifestError(f"line {line_no}: unknown split token {split!r}")
    language_l = language.strip().lower()
    if not language_l:
        raise ManifestError(f"line {line_no}: empty language")
    if not speaker_id.strip():
        raise ManifestError(f"line {line_no}: empty speaker_id")
    return ManifestEntry(
        audio_path=audio_path,
        language=language_l,
        mode=mode_l,
        speaker_id=speaker_id.strip(),
        split=split_l,
        transcript=_parse_transcript(transcript.strip()),
        line_no=line_no,
    )


def load_manifest(path) -> list[ManifestEntry]:
    """Parse and validate a manifest file.

    Raises ManifestError (with line number) on malformed records; warns with
    ManifestWarning when train and test splits share a speaker.
    """
    entries: list[ManifestEntry] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            entries.append(parse_manifest_line(line, line_no))
    check_speaker_disjointness(entries)
    return entries


def check_speaker_disjointness(entries: list[ManifestEntry]) -> set[str]:
    """Return speakers shared between train and test; warn if any."""
    train = {e.speaker_id for e in entries if e.split == "train"}
    test = {e.speaker_id for e in entries if e.split == "test"}
    shared = train & test
    if shared:
        warnings.warn(
            f"speakers present in both train and test splits: {sorted(shared)}",
            ManifestWarning,
        )
    return shared


def write_manifest(path, entries: list[ManifestEntry]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# audio_path\tlanguage\tmode\tspeaker_id\tsplit\ttranscript\n")
        for e in entries:
            transcript = " ".join(e.transcript) if e.transcript else "-"
            fh.write(f"{e.audio_path}\t{e.language}\t{e.mode}\t{e.speaker_id}\t{e.split}\t{transcript}\n")
