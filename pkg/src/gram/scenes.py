"""Online mixing of naturalistic scenes: BRIR convolution + SNR-scaled noise.

A scene is target-through-source-BRIR plus the sum of noise-through-noise-BRIRs,
scaled so the target-to-noise power ratio hits the requested SNR exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio_io import RATE_HZ, Waveform
from .dsp import apply_fade, fft_convolve, snr_scale
from .rooms import cosd, sind

SCENE_DURATION_S = 10.0
FADE_S = 0.2
SNR_RANGE_DB = (5.0, 40.0)


def direction_vector(azimuth_deg: float, elevation_deg: float) -> np.ndarray:
    """Unit vector (cos e cos a, cos e sin a, sin e) for a source direction."""
    az = azimuth_deg % 360.0
    return np.array([cosd(elevation_deg) * cosd(az),
                     cosd(elevation_deg) * sind(az),
                     sind(elevation_deg)])


@dataclass
class SceneSpec:
    scene_id: str
    target_clip: str
    noise_clip: str
    brir_set: dict              # {"source": BinauralImpulseResponse, "noise": [...]}
    snr_db: float
    seed: int = 0

    def __post_init__(self):
        lo, hi = SNR_RANGE_DB
        if not lo <= self.snr_db <= hi:
            raise ValueError(f"snr_db {self.snr_db} outside [{lo}, {hi}]")
        if len(self.brir_set.get("noise", [])) < 1:
            raise ValueError("scene needs at least one noise BRIR")


@dataclass
class MixedScene:
    audio: Waveform
    meta: dict = field(default_factory=dict)


def _to_length(x: np.ndarray, n: int) -> np.ndarray:
    if x.shape[-1] >= n:
        return x[..., :n]
    pad = [(0, 0)] * (x.ndim - 1) + [(0, n - x.shape[-1])]
    return np.pad(x, pad)


def prepare_noise(noise: Waveform, rate_hz: int = RATE_HZ) -> np.ndarray:
    """Return a mono noise bed of exactly 10 s with 200 ms fade-in/out.

    Longer clips are trimmed; shorter ones are loop-padded with 200 ms linear
    crossfades at the seams before the outer fades are applied.
    """
    if noise.channels != 1:
        raise ValueError("noise clip must be mono")
    x = noise.data[0].astype(np.float64)
    n_fade = int(round(FADE_S * rate_hz))
    if x.shape[0] < 2 * n_fade:
        raise ValueError(f"noise of {x.shape[0]} samples shorter than two fades")
    target_len = int(round(SCENE_DURATION_S * rate_hz))

    while x.shape[0] < target_len:
        ramp = np.arange(n_fade) / n_fade
        head = x[:n_fade] * ramp
        out = np.concatenate([x[:-n_fade], x[-n_fade:] * ramp[::-1] + head, x[n_fade:]])
        x = out
    x = x[:target_len]
    return apply_fade(x, FADE_S, rate_hz)


def _convolve_binaural(brir, signal: np.ndarray, n_out: int) -> np.ndarray:
    return np.stack([_to_length(fft_convolve(signal, brir.left), n_out),
                     _to_length(fft_convolve(signal, brir.right), n_out)])


def mix_scene(spec: SceneSpec, target: Waveform, noise: Waveform,
              noiseless: bool = False) -> MixedScene:
    """Mix one naturalistic scene.

    T = source BRIR (*) target, N = sum of noise BRIR (*) prepared noise;
    output is T + b N trimmed to 10 s, with b chosen so that
    10 log10(P_T / P_bN) equals spec.snr_db exactly (power pooled over
    both ears).  ``noiseless`` forces b = 0 for debugging.
    """
    if target.channels != 1:
        raise ValueError("target clip must be mono")
    if target.rate_hz != RATE_HZ or noise.rate_hz != RATE_HZ:
        raise ValueError(f"clips must be {RATE_HZ} Hz (resampling is out of scope)")
    rate = target.rate_hz
    n_out = int(round(SCENE_DURATION_S * rate))
    target_sig = _to_length(target.data[0].astype(np.float64), n_out)
    noise_sig = prepare_noise(noise, rate)

    t_ears = _convolve_binaural(spec.brir_set["source"], target_sig, n_out)
    n_ears = np.zeros_like(t_ears)
    for brir in spec.brir_set["noise"]:
        n_ears += _convolve_binaural(brir, noise_sig, n_out)

    b = 0.0 if noiseless else snr_scale(t_ears, n_ears, spec.snr_db).b
    mixed = t_ears + b * n_ears

    src_meta = spec.brir_set["source"].meta
    vec = direction_vector(src_meta["source_azimuth_deg"],
                           src_meta["source_elevation_deg"])
    meta = {
        "scene_id": spec.scene_id,
        "target_clip": spec.target_clip,
        "noise_clip": spec.noise_clip,
        "snr_db": float(spec.snr_db),
        "b": float(b),
        "noise_kind": "localized" if len(spec.brir_set["noise"]) == 1 else "diffuse",
        "source_unit_vector": vec.tolist(),
        "source_azimuth_deg": src_meta["source_azimuth_deg"],
        "source_elevation_deg": src_meta["source_elevation_deg"],
    }
    return MixedScene(audio=Waveform(mixed, rate_hz=rate), meta=meta)
