"""Synthetic stand-in corpora: labeled mono clips plus noise beds.

Real corpora are user-supplied; these generators produce deterministic,
class-structured signals so the whole pipeline can run self-contained.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .audio_io import RATE_HZ, Manifest, ManifestEntry, Waveform, save_manifest, write_wav
from .dsp import apply_fade
from .seeds import derive_seed

CLASSES = ("tone", "chirp", "noise_burst", "harmonic")


def _synth_clip(kind: str, rng: np.random.Generator, duration_s: float) -> np.ndarray:
    n = int(duration_s * RATE_HZ)
    t = np.arange(n) / RATE_HZ
    if kind == "tone":
        freq = rng.uniform(200.0, 2000.0)
        x = np.sin(2 * np.pi * freq * t)
    elif kind == "chirp":
        f0 = rng.uniform(100.0, 500.0)
        f1 = rng.uniform(2000.0, 8000.0)
        x = np.sin(2 * np.pi * (f0 * t + (f1 - f0) / (2 * duration_s) * t**2))
    elif kind == "noise_burst":
        x = rng.standard_normal(n)
        # amplitude-modulate with a slow random envelope
        env_pts = rng.uniform(0.1, 1.0, 8)
        env = np.interp(np.linspace(0, 7, n), np.arange(8), env_pts)
        x *= env
    elif kind == "harmonic":
        f0 = rng.uniform(110.0, 440.0)
        x = sum(np.sin(2 * np.pi * f0 * k * t) / k for k in range(1, 6))
    else:
        raise ValueError(f"unknown class {kind!r}")
    x = 0.5 * x / np.max(np.abs(x))
    return apply_fade(x, 0.05)


def make_corpus(out_dir, n_items: int, seed: int, duration_s: float = 10.0,
                classes=CLASSES) -> Path:
    """Write n_items labeled WAVs + manifest.jsonl; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n_items):
        kind = classes[i % len(classes)]
        rng = np.random.default_rng(derive_seed(seed, "corpus", i))
        x = _synth_clip(kind, rng, duration_s)
        name = f"clip_{i:04d}.wav"
        write_wav(out_dir / name, Waveform(x), encoding="float32")
        entries.append(ManifestEntry(id=f"clip_{i:04d}", audio_path=name,
                                     label=kind, duration_s=duration_s))
    path = out_dir / "manifest.jsonl"
    save_manifest(path, Manifest(entries))
    return path


def make_noise_corpus(out_dir, n_items: int, seed: int,
                      duration_range_s=(4.0, 14.0)) -> Path:
    """Write colored-noise beds of varying length (tests loop-pad and trim)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n_items):
        rng = np.random.default_rng(derive_seed(seed, "noise", i))
        duration = rng.uniform(*duration_range_s)
        n = int(duration * RATE_HZ)
        white = rng.standard_normal(n)
        # one-pole lowpass via FFT shaping for a pink-ish spectrum
        spec = np.fft.rfft(white)
        freqs = np.fft.rfftfreq(n, 1 / RATE_HZ)
        spec /= np.sqrt(1.0 + (freqs / 500.0) ** 2)
        x = np.fft.irfft(spec, n)
        x = 0.3 * x / np.max(np.abs(x))
        name = f"noise_{i:04d}.wav"
        write_wav(out_dir / name, Waveform(x), encoding="float32")
        entries.append(ManifestEntry(id=f"noise_{i:04d}", audio_path=name,
                                     label="noise", duration_s=duration))
    path = out_dir / "manifest.jsonl"
    save_manifest(path, Manifest(entries))
    return path
