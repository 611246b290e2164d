"""Binaural log-mel spectrograms and the in-batch segment sampler.

25 ms Hann window, 10 ms hop, 128 mel bands over 50-16000 Hz; a 10 s clip
becomes a 2 x 1024 x 128 array, and training crops 16 random 200-frame
(2 s) segments from each clip so one expensive mixed scene yields 16 samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .audio_io import RATE_HZ, Waveform
from .dsp import MelFilterbank, mel_filterbank

WINDOW_S = 0.025
HOP_S = 0.010
# 15.6 Hz bins: coarser grids leave the lowest mel triangles without bins
N_FFT = 2048
LOG_EPS = 1e-10
FULL_CLIP_FRAMES = 1024
SEGMENT_FRAMES = 200
SEGMENTS_PER_CLIP = 16


@dataclass
class BinauralSpectrogram:
    values: np.ndarray  # (channels, frames, mels)

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ValueError(f"expected (channels, frames, mels), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("spectrogram contains NaN/Inf")

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]

    @property
    def mels(self) -> int:
        return self.values.shape[2]


@dataclass
class SegmentBatch:
    segments: np.ndarray        # (n_segments, channels, SEGMENT_FRAMES, mels)
    offsets_frames: np.ndarray  # (n_segments,)
    parent_id: str = ""


@lru_cache(maxsize=4)
def _filterbank(rate_hz: int) -> MelFilterbank:
    return mel_filterbank(N_FFT, rate_hz)


@lru_cache(maxsize=4)
def _hann(n: int) -> np.ndarray:
    # periodic Hann
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def _stft_power(x: np.ndarray, rate_hz: int) -> np.ndarray:
    win_len = int(round(WINDOW_S * rate_hz))
    hop = int(round(HOP_S * rate_hz))
    n_frames = 1 + x.shape[0] // hop
    half = win_len // 2
    padded = np.pad(x, (half, half + win_len), mode="reflect")
    offsets = np.arange(n_frames) * hop
    frames = padded[offsets[:, None] + np.arange(win_len)[None, :]]
    spec = np.fft.rfft(frames * _hann(win_len), n=N_FFT, axis=1)
    return np.abs(spec) ** 2  # (frames, bins)


def logmel(audio: Waveform) -> BinauralSpectrogram:
    """Binaural log-mel spectrogram of a 2-channel 32 kHz waveform.

    Exactly-10 s input is padded with the log floor from the 1001 computed
    frames up to 1024; other durations keep their natural frame count.
    """
    if audio.channels != 2:
        raise ValueError(f"expected 2 channels, got {audio.channels}")
    if audio.rate_hz != RATE_HZ:
        raise ValueError(f"expected {RATE_HZ} Hz, got {audio.rate_hz}")
    fb = _filterbank(audio.rate_hz)
    channels = []
    for ch in audio.data:
        power = _stft_power(np.asarray(ch, dtype=np.float64), audio.rate_hz)
        mel = power @ fb.weights.T
        channels.append(np.log(mel + LOG_EPS))
    values = np.stack(channels)  # (2, frames, mels)

    if audio.samples_per_channel == int(10 * RATE_HZ):
        frames = values.shape[1]
        if frames > FULL_CLIP_FRAMES:
            values = values[:, :FULL_CLIP_FRAMES]
        elif frames < FULL_CLIP_FRAMES:
            pad = np.full((values.shape[0], FULL_CLIP_FRAMES - frames, values.shape[2]),
                          np.log(LOG_EPS))
            values = np.concatenate([values, pad], axis=1)
    return BinauralSpectrogram(values)


def tone_mel_band(freq_hz: float, rate_hz: int = RATE_HZ) -> int:
    """Mel band whose center frequency is nearest ``freq_hz``."""
    fb = _filterbank(rate_hz)
    return int(np.argmin(np.abs(fb.centers_hz - freq_hz)))


def sample_segments(spec: BinauralSpectrogram, seed,
                    n_segments: int = SEGMENTS_PER_CLIP,
                    parent_id: str = "") -> SegmentBatch:
    """Crop ``n_segments`` random 200-frame segments from one spectrogram.

    Offsets are sampled independently uniform over [0, frames - 200], so
    segments partially overlap for ordinary clip lengths.  Crops are exact
    sub-arrays of the parent (no recomputation).
    """
    frames = spec.frames
    if frames < SEGMENT_FRAMES:
        raise ValueError(f"clip of {frames} frames shorter than one segment")
    rng = np.random.default_rng(seed)
    offsets = rng.integers(0, frames - SEGMENT_FRAMES + 1, size=n_segments)
    segments = np.stack([spec.values[:, o:o + SEGMENT_FRAMES, :] for o in offsets])
    return SegmentBatch(segments=segments, offsets_frames=offsets, parent_id=parent_id)
