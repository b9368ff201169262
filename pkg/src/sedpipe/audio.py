"""WAV I/O and elementary signal measures.

All audio is held as double-precision mono throughout the pipeline; files
are only converted at the read/write boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

SILENCE_FLOOR_DB = -120.0


class AudioError(Exception):
    pass


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform with its sample rate. Samples are float64 in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise AudioError(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.ndim != 1 or samples.size == 0:
            raise AudioError("samples must be a non-empty 1-D array")
        if not np.all(np.isfinite(samples)):
            raise AudioError("samples contain non-finite values")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


def read_wav(path) -> AudioClip:
    """Read a PCM WAV file as a mono AudioClip normalized to [-1, 1].

    Stereo channels are averaged. 16/32-bit integer and 32/64-bit float
    encodings are accepted.
    """
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise AudioError(f"unreadable file: {path}: {exc}") from exc
    if data.size == 0:
        raise AudioError(f"zero-length audio: {path}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise AudioError(f"unsupported encoding {data.dtype} in {path}")
    if samples.ndim == 2:
        if samples.shape[1] > 2:
            raise AudioError(f"unsupported channel count {samples.shape[1]} in {path}")
        samples = samples.mean(axis=1)
    return AudioClip(samples=samples, sample_rate=int(rate))


def write_wav(clip: AudioClip, path, float_mode: bool = True, strict: bool = False) -> None:
    """Write a clip to disk.

    float_mode=True writes 64-bit float samples (lossless round trip);
    otherwise 16-bit PCM. strict=True rejects out-of-range amplitudes
    instead of letting them clip at the encoder.
    """
    peak = np.max(np.abs(clip.samples)) if clip.samples.size else 0.0
    if strict and peak > 1.0:
        raise AudioError(f"amplitude {peak:.4f} exceeds full scale in strict mode")
    if float_mode:
        wavfile.write(path, clip.sample_rate, clip.samples.astype(np.float64))
    else:
        scaled = np.clip(clip.samples, -1.0, 1.0)
        wavfile.write(path, clip.sample_rate, (scaled * 32767.0).round().astype(np.int16))


def rms(clip_or_samples) -> float:
    """Root-mean-square amplitude."""
    samples = clip_or_samples.samples if isinstance(clip_or_samples, AudioClip) else np.asarray(clip_or_samples, dtype=np.float64)
    if samples.size == 0:
        raise AudioError("rms of empty signal is undefined")
    return float(np.sqrt(np.mean(samples * samples)))


def db_to_linear(db: float) -> float:
    """Convert decibels to an amplitude ratio (10^(db/20))."""
    if not np.isfinite(db):
        raise AudioError(f"non-finite dB value: {db}")
    return float(10.0 ** (db / 20.0))


def linear_to_db(ratio: float) -> float:
    """Convert an amplitude ratio to decibels; 0 maps to the silence floor."""
    if ratio <= 0.0:
        return SILENCE_FLOOR_DB
    return float(20.0 * np.log10(ratio))
