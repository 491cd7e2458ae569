"""WAV loading, resampling, and fixed-duration shaping.

Decoding is deliberately narrow: PCM / float WAV via scipy. Anything the
reader rejects becomes UnreadableAudio so callers can skip one bad clip
without losing a batch. Compressed formats are out of scope; convert first.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import UnreadableAudio
from .specs import ExtractionSpec

# peak magnitude per integer PCM dtype, for scaling into [-1, 1]
_PCM_SCALE = {
    np.dtype(np.int16): 32768.0,
    np.dtype(np.int32): 2147483648.0,
}


def load_audio(path: str) -> tuple[np.ndarray, int]:
    """Read a WAV file as (mono float32 waveform in [-1, 1], native rate)."""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError as e:
        raise UnreadableAudio(f"{path}: file not found") from e
    except Exception as e:  # scipy raises ValueError and friends on bad WAVs
        raise UnreadableAudio(f"{path}: {e}") from e
    if data.ndim == 2:
        data = data.mean(axis=1)
    elif data.ndim != 1:
        raise UnreadableAudio(f"{path}: unsupported shape {data.shape}")
    if data.dtype in _PCM_SCALE:
        wave = data.astype(np.float32) / _PCM_SCALE[data.dtype]
    elif data.dtype == np.uint8:  # 8-bit WAV is unsigned, midpoint 128
        wave = (data.astype(np.float32) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.floating):
        wave = data.astype(np.float32)
    else:
        raise UnreadableAudio(f"{path}: unsupported sample dtype {data.dtype}")
    if not np.all(np.isfinite(wave)):
        raise UnreadableAudio(f"{path}: non-finite samples")
    return wave, int(rate)


def resample(wave: np.ndarray, src_rate: int, dst_rate: int) -> np.ndarray:
    if src_rate == dst_rate:
        return np.asarray(wave, dtype=np.float32)
    g = math.gcd(src_rate, dst_rate)
    out = resample_poly(np.asarray(wave, dtype=np.float64), dst_rate // g, src_rate // g)
    return out.astype(np.float32)


def fix_duration(wave: np.ndarray, n_samples: int) -> np.ndarray:
    """Truncate the tail past n_samples, or zero-pad the tail up to it."""
    if len(wave) >= n_samples:
        return np.asarray(wave[:n_samples], dtype=np.float32)
    out = np.zeros(n_samples, dtype=np.float32)
    out[: len(wave)] = wave
    return out


def prepare_clip(path: str, spec: ExtractionSpec) -> np.ndarray:
    """Load, resample to the spec rate, and shape to exactly clip_samples."""
    wave, rate = load_audio(path)
    wave = resample(wave, rate, spec.sampling_rate)
    return fix_duration(wave, spec.clip_samples)
