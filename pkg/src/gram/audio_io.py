"""WAV and feature-file I/O plus the JSONL manifests gluing corpora together.

Only what the pipeline needs: PCM16/float32 WAV (no resampling, no codecs),
the ``.bsf`` binary feature format, and line-delimited JSON manifests.
All audio is processed at 32 kHz; files at other rates are rejected.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RATE_HZ = 32000

FEATURE_MAGIC = b"GRAMBSF1"

_WAV_FMT_PCM = 1
_WAV_FMT_FLOAT = 3


class UnsupportedWavError(ValueError):
    """WAV encoding other than PCM16 or float32."""


class CorruptWavError(ValueError):
    """Malformed or truncated WAV structure."""


class CorruptFeatureError(ValueError):
    """Feature file whose header and payload disagree."""


class ManifestError(ValueError):
    """Malformed manifest (duplicate ids, unresolvable paths, bad records)."""


@dataclass
class Waveform:
    """Multichannel audio in [-1, 1] nominal amplitude.

    ``data`` has shape (channels, samples); every channel has equal length
    by construction.
    """

    data: np.ndarray
    rate_hz: int = RATE_HZ

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data))
        if self.data.ndim != 2:
            raise ValueError(f"waveform data must be 2-D, got shape {self.data.shape}")
        if self.rate_hz <= 0:
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("waveform contains NaN or Inf samples")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def samples_per_channel(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.data.shape[1] / self.rate_hz


def read_wav(path) -> Waveform:
    """Read a PCM16 or float32 WAV file.

    PCM16 samples are scaled to [-1, 1] by division with 32768, so the
    negative full-scale value -32768 maps to -1.0 exactly.  Raises
    FileNotFoundError, UnsupportedWavError or CorruptWavError depending
    on what is wrong with the input.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise CorruptWavError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            if size < 16 or len(body) < 16:
                raise CorruptWavError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            if len(body) < size:
                raise CorruptWavError(f"{path}: data chunk truncated "
                                      f"({len(body)} of {size} bytes)")
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None or data is None:
        raise CorruptWavError(f"{path}: missing fmt or data chunk")
    audio_format, channels, rate, _byte_rate, _block_align, bits = fmt
    if channels < 1:
        raise CorruptWavError(f"{path}: zero channels")

    if audio_format == _WAV_FMT_PCM and bits == 16:
        samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == _WAV_FMT_FLOAT and bits == 32:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedWavError(
            f"{path}: unsupported encoding (format={audio_format}, bits={bits}); "
            "expected PCM16 or float32")

    if samples.size % channels != 0:
        raise CorruptWavError(f"{path}: payload not a whole number of frames")
    return Waveform(samples.reshape(-1, channels).T.copy(), rate_hz=rate)


def write_wav(path, wave: Waveform, encoding: str = "float32") -> None:
    """Write a Waveform as float32 (default) or PCM16 WAV."""
    frames = np.ascontiguousarray(wave.data.T)
    if encoding == "float32":
        payload = frames.astype("<f4").tobytes()
        audio_format, bits = _WAV_FMT_FLOAT, 32
    elif encoding == "pcm16":
        clipped = np.clip(np.round(frames * 32768.0), -32768, 32767)
        payload = clipped.astype("<i2").tobytes()
        audio_format, bits = _WAV_FMT_PCM, 16
    else:
        raise ValueError(f"unknown encoding {encoding!r}")

    channels = wave.channels
    block_align = channels * bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, audio_format, channels, wave.rate_hz,
        wave.rate_hz * block_align, block_align, bits,
        b"data", len(payload))
    Path(path).write_bytes(header + payload)


def write_feature(path, values: np.ndarray) -> None:
    """Write a binaural spectrogram as a .bsf feature file.

    Layout: 8-byte magic, three little-endian u32 (channels, frames, mels),
    then the float32 payload in channel-major, frame-row order.
    """
    values = np.asarray(values)
    if values.ndim != 3:
        raise ValueError(f"expected (channels, frames, mels), got {values.shape}")
    channels, frames, mels = values.shape
    header = FEATURE_MAGIC + struct.pack("<III", channels, frames, mels)
    Path(path).write_bytes(header + np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_feature(path) -> np.ndarray:
    """Read a .bsf feature file back into a (channels, frames, mels) array."""
    raw = Path(path).read_bytes()
    if len(raw) < 20 or raw[:8] != FEATURE_MAGIC:
        raise CorruptFeatureError(f"{path}: bad magic or truncated header")
    channels, frames, mels = struct.unpack_from("<III", raw, 8)
    expect = channels * frames * mels * 4
    payload = raw[20:]
    if len(payload) != expect:
        raise CorruptFeatureError(
            f"{path}: payload is {len(payload)} bytes, header implies {expect}")
    values = np.frombuffer(payload, dtype="<f4").reshape(channels, frames, mels)
    return values.astype(np.float32)


@dataclass
class ManifestEntry:
    id: str
    audio_path: str
    label: object  # class string or unit 3-vector (list of floats)
    duration_s: float


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.id in seen:
                raise ManifestError(f"duplicate manifest id {e.id!r}")
            seen.add(e.id)

    def __len__(self):
        return len(self.entries)

    def by_id(self, item_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.id == item_id:
                return e
        raise KeyError(item_id)


def load_manifest(path, check_paths: bool = True) -> Manifest:
    """Load a JSONL manifest; relative audio paths resolve against its directory."""
    base = Path(path).parent
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            try:
                entry = ManifestEntry(
                    id=rec["id"], audio_path=rec["audio_path"],
                    label=rec.get("label"), duration_s=float(rec.get("duration_s", 0.0)))
            except KeyError as exc:
                raise ManifestError(f"{path}:{lineno}: missing field {exc}") from exc
            resolved = Path(entry.audio_path)
            if not resolved.is_absolute():
                resolved = base / resolved
            if check_paths and not resolved.exists():
                raise ManifestError(f"{path}:{lineno}: audio path {resolved} not found")
            entry.audio_path = str(resolved)
            entries.append(entry)
    return Manifest(entries)


def save_manifest(path, manifest: Manifest) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in manifest.entries:
            rec = {"id": e.id, "audio_path": e.audio_path,
                   "label": e.label, "duration_s": e.duration_s}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
