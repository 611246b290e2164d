"""Shoebox binaural room impulse responses.

Image-source reflections with fractional-delay sinc placement, a spherical
head model for the two ears (Woodworth ITD plus first-order head shadow),
Schroeder RT60 measurement, and the random scene geometry sampler.

Coordinate convention used throughout: x points front, y points toward the
right ear, z up.  Azimuth 0 is straight ahead, 90 is to the listener's right;
elevation is positive upward.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .audio_io import RATE_HZ, Waveform, read_wav, write_wav
from .dsp import fft_convolve

SPEED_OF_SOUND = 343.0
HEAD_RADIUS_M = 0.0875
SHADOW_CUTOFF_HZ = 1500.0
# both ears carry this common alignment latency so ITD shifts stay causal
EAR_BASE_DELAY = 32

DIST_RANGE_M = (1.5, 5.0)
DIFFUSE_COUNTS = (3, 4, 5)


class InsufficientDecayError(ValueError):
    """Impulse response does not decay far enough to fit an RT60."""


@dataclass
class RoomSpec:
    dims_m: tuple
    absorption: float = 0.42
    max_order: int = 30

    def __post_init__(self):
        if len(self.dims_m) != 3 or any(d <= 0 for d in self.dims_m):
            raise ValueError(f"bad room dimensions {self.dims_m}")
        if not 0.0 < self.absorption <= 1.0:
            raise ValueError(f"absorption must be in (0, 1], got {self.absorption}")
        if self.max_order < 0:
            raise ValueError("max_order must be >= 0")

    def contains(self, point, margin: float = 0.0) -> bool:
        return all(margin < p < d - margin for p, d in zip(point, self.dims_m))


@dataclass
class ScenePose:
    listener_pos_m: np.ndarray
    listener_heading_deg: float
    source_pos_m: np.ndarray
    noise_positions_m: list
    noise_kind: str  # "localized" | "diffuse"


@dataclass
class BinauralImpulseResponse:
    left: np.ndarray
    right: np.ndarray
    rate_hz: int = RATE_HZ
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.left.shape != self.right.shape:
            raise ValueError("left/right lengths differ")
        energy = float(np.sum(self.left**2) + np.sum(self.right**2))
        if not math.isfinite(energy) or energy == 0.0:
            raise ValueError("BRIR energy must be finite and nonzero")

    def as_waveform(self) -> Waveform:
        return Waveform(np.stack([self.left, self.right]), rate_hz=self.rate_hz)


def lateral_angle_rad(azimuth_deg: float, elevation_deg: float) -> float:
    """Angle off the median plane, positive toward the right ear."""
    return math.asin(sind(azimuth_deg) * cosd(elevation_deg))


def itd_seconds(azimuth_deg: float, elevation_deg: float = 0.0) -> float:
    """Woodworth interaural time difference (a/c)(theta + sin theta)."""
    lateral = abs(lateral_angle_rad(azimuth_deg, elevation_deg))
    return HEAD_RADIUS_M / SPEED_OF_SOUND * (lateral + math.sin(lateral))


def sind(deg: float) -> float:
    deg = deg % 360.0
    if deg == 0.0 or deg == 180.0:
        return 0.0
    if deg == 90.0:
        return 1.0
    if deg == 270.0:
        return -1.0
    return math.sin(math.radians(deg))


def cosd(deg: float) -> float:
    return sind(deg + 90.0)


def sample_scene(seed, room: RoomSpec, listener_height: float = 1.5,
                 listener_margin: float = 0.5, wall_margin: float = 0.3,
                 max_tries: int = 10000) -> ScenePose:
    """Sample listener/source/noise geometry for one scene.

    Source direction is drawn uniformly (distance in [1.5, 5] m, azimuth in
    [0, 360), elevation in [-90, 90]) and rejection-resampled until the
    source lands strictly inside the room.  Noise is localized with
    probability 0.5 (one position), otherwise diffuse with 3, 4 or 5
    positions uniform over the room interior.
    """
    rng = np.random.default_rng(seed)
    lx, ly, lz = room.dims_m
    if listener_margin * 2 >= lx or listener_margin * 2 >= ly:
        raise ValueError("listener margin leaves no admissible positions")
    listener = np.array([
        rng.uniform(listener_margin, lx - listener_margin),
        rng.uniform(listener_margin, ly - listener_margin),
        listener_height])
    if not room.contains(listener):
        raise ValueError(f"listener height {listener_height} outside room of {lz} m")
    heading = rng.uniform(0.0, 360.0)

    source = None
    for _ in range(max_tries):
        dist = rng.uniform(*DIST_RANGE_M)
        az = rng.uniform(0.0, 360.0)
        el = rng.uniform(-90.0, 90.0)
        candidate = listener + dist * np.array(
            [cosd(el) * cosd(az), cosd(el) * sind(az), sind(el)])
        if room.contains(candidate, wall_margin):
            source = candidate
            break
    if source is None:
        raise RuntimeError(f"no valid source position found in {max_tries} draws")

    localized = rng.random() < 0.5
    n_noise = 1 if localized else int(rng.choice(DIFFUSE_COUNTS))
    noise_positions = [
        np.array([rng.uniform(wall_margin, lx - wall_margin),
                  rng.uniform(wall_margin, ly - wall_margin),
                  rng.uniform(wall_margin, lz - wall_margin)])
        for _ in range(n_noise)]
    return ScenePose(listener_pos_m=listener, listener_heading_deg=float(heading),
                     source_pos_m=source, noise_positions_m=noise_positions,
                     noise_kind="localized" if localized else "diffuse")


def image_source_rir(room: RoomSpec, src, rcv, rate_hz: int = RATE_HZ) -> np.ndarray:
    """Mono shoebox RIR via the image-source method.

    Every image up to ``room.max_order`` total reflections contributes an
    impulse of amplitude r^k / d (r = sqrt(1 - absorption), 1/distance
    spreading) at delay d / 343 s, placed with a 33-tap Hann-windowed sinc.
    """
    src = np.asarray(src, dtype=np.float64)
    rcv = np.asarray(rcv, dtype=np.float64)
    if np.allclose(src, rcv):
        raise ValueError("source and receiver coincide")
    order = room.max_order
    dims = np.asarray(room.dims_m, dtype=np.float64)
    refl = math.sqrt(1.0 - room.absorption)

    # per-axis image index m: position m*L + s for even m, (m+1)*L - s for odd m,
    # contributing |m| reflections on that axis
    m = np.arange(-order, order + 1)
    mx, my, mz = np.meshgrid(m, m, m, indexing="ij")
    k_total = np.abs(mx) + np.abs(my) + np.abs(mz)
    keep = k_total <= order
    idx = np.stack([mx[keep], my[keep], mz[keep]], axis=1)  # (n_images, 3)
    k_total = k_total[keep]

    even = idx % 2 == 0
    positions = np.where(even, idx * dims + src, (idx + 1) * dims - src)
    dist = np.sqrt(np.sum((positions - rcv) ** 2, axis=1))
    amps = refl**k_total / dist
    delays = dist / SPEED_OF_SOUND * rate_hz

    length = int(np.ceil(delays.max())) + _kernels.SINC_TAPS
    out = np.zeros(length)
    _kernels.place_taps(out, delays, amps)
    return out


def _shelf_kernel(gain: float, cutoff_hz: float, rate_hz: int) -> np.ndarray:
    """FIR expansion of a first-order shelf: unity at DC, ``gain`` at Nyquist."""
    k = math.tan(math.pi * cutoff_hz / rate_hz)
    b0 = (k + gain) / (k + 1.0)
    b1 = (k - gain) / (k + 1.0)
    a1 = (k - 1.0) / (k + 1.0)
    # 1 / (1 + a1 z^-1) expanded as a geometric series, truncated at round-off
    n_tail = int(math.ceil(math.log(1e-18) / math.log(abs(a1)))) if a1 != 0 else 1
    tail = (-a1) ** np.arange(n_tail)
    kernel = np.zeros(n_tail + 1)
    kernel[:n_tail] += b0 * tail
    kernel[1:] += b1 * tail
    return kernel


def _fractional_delay(signal: np.ndarray, delay_samples: float) -> np.ndarray:
    kernel = np.zeros(2 * EAR_BASE_DELAY)
    _kernels.place_taps(kernel, np.array([EAR_BASE_DELAY + delay_samples]),
                        np.array([1.0]))
    return fft_convolve(signal, kernel)


def binauralize(rir, azimuth_deg: float, elevation_deg: float,
                rate_hz: int = RATE_HZ, meta: dict | None = None) -> BinauralImpulseResponse:
    """Spherical-head binauralization of a mono RIR.

    The lateral angle theta (angle off the median plane, positive to the
    right) drives the Woodworth ITD (a/c)(theta + sin theta), applied as a
    +-ITD/2 fractional delay, and a first-order head shadow that attenuates
    the far ear above ~1.5 kHz while mildly boosting the near ear so that
    the summed two-ear energy stays within 1 dB of 2x the input.
    """
    if not 0.0 <= azimuth_deg < 360.0:
        raise ValueError(f"azimuth {azimuth_deg} outside [0, 360)")
    if not -90.0 <= elevation_deg <= 90.0:
        raise ValueError(f"elevation {elevation_deg} outside [-90, 90]")
    rir = np.asarray(rir, dtype=np.float64)

    lateral = lateral_angle_rad(azimuth_deg, elevation_deg)
    shift = itd_seconds(azimuth_deg, elevation_deg) * rate_hz / 2.0

    if lateral == 0.0:
        ear = _fractional_delay(rir, 0.0)
        left, right = ear, ear.copy()
    else:
        near = _fractional_delay(rir, -shift)
        far = _fractional_delay(rir, +shift)
        g_far = 1.0 - 0.6 * abs(math.sin(lateral))
        g_near = math.sqrt(2.0 - g_far**2)
        far = fft_convolve(far, _shelf_kernel(g_far, SHADOW_CUTOFF_HZ, rate_hz))
        near = fft_convolve(near, _shelf_kernel(g_near, SHADOW_CUTOFF_HZ, rate_hz))
        far = far[: near.shape[0]]
        if lateral > 0:  # source on the right: right ear is near
            left, right = far, near
        else:
            left, right = near, far

    info = dict(meta or {})
    info.update({"source_azimuth_deg": float(azimuth_deg),
                 "source_elevation_deg": float(elevation_deg)})
    return BinauralImpulseResponse(left=left, right=right, rate_hz=rate_hz, meta=info)


def _schroeder_rt60(h: np.ndarray, rate_hz: int) -> float:
    energy = np.cumsum((h * h)[::-1])[::-1]
    positive = np.nonzero(energy > 0)[0]
    if positive.size == 0:
        raise InsufficientDecayError("impulse response has no energy")
    energy = energy[: positive[-1] + 1]
    curve_db = 10.0 * np.log10(energy / energy[0])
    fit = np.nonzero((curve_db <= -5.0) & (curve_db >= -25.0))[0]
    below = np.nonzero(curve_db <= -25.0)[0]
    # backward integration always plunges at the very tail; a genuine decay
    # must cross -25 dB well before that
    if fit.size < 2 or below.size == 0 or below[0] > 0.95 * curve_db.size:
        raise InsufficientDecayError("decay range above -25 dB; cannot fit T20")
    t = fit / rate_hz
    slope, _ = np.polyfit(t, curve_db[fit], 1)
    if slope >= 0:
        raise InsufficientDecayError("non-decaying energy curve")
    return float(-60.0 / slope)


def measure_rt60(brir: BinauralImpulseResponse) -> float:
    """Schroeder RT60: line fit of the backward-integrated energy on
    [-5, -25] dB, extrapolated to 60 dB, averaged over the two channels."""
    left = _schroeder_rt60(brir.left, brir.rate_hz)
    right = _schroeder_rt60(brir.right, brir.rate_hz)
    return 0.5 * (left + right)


def relative_direction(listener_pos, heading_deg: float, target_pos):
    """(azimuth, elevation, distance) of target as seen from the listener."""
    vec = np.asarray(target_pos, dtype=np.float64) - np.asarray(listener_pos, dtype=np.float64)
    dist = float(np.linalg.norm(vec))
    az_world = math.degrees(math.atan2(vec[1], vec[0]))
    azimuth = (az_world - heading_deg) % 360.0
    elevation = math.degrees(math.asin(np.clip(vec[2] / dist, -1.0, 1.0)))
    return azimuth, elevation, dist


def render_scene_brirs(room: RoomSpec, pose: ScenePose,
                       rate_hz: int = RATE_HZ) -> dict:
    """Render the source BRIR and one BRIR per noise position.

    Azimuths are taken relative to the listener heading.  Each BRIR carries
    its geometry and measured RT60 in ``meta``.
    """

    def _render(position):
        az, el, dist = relative_direction(pose.listener_pos_m,
                                          pose.listener_heading_deg, position)
        rir = image_source_rir(room, position, pose.listener_pos_m, rate_hz)
        brir = binauralize(rir, az, el, rate_hz, meta={"distance_m": dist})
        brir.meta["rt60_s"] = measure_rt60(brir)
        return brir

    return {"source": _render(pose.source_pos_m),
            "noise": [_render(p) for p in pose.noise_positions_m]}


# Schroeder fits on image-source RIRs read ~20% above the Sabine prediction
_SABINE_BIAS = 1.2


def sample_room(seed) -> RoomSpec:
    """Default room distribution, calibrated so RT60 lands inside [0.2, 0.5] s.

    Dimensions are drawn freely; absorption is then set from the Sabine
    relation to hit a per-room target reverberation time in [0.27, 0.42] s.
    """
    rng = np.random.default_rng(seed)
    dims = (rng.uniform(4.0, 7.0), rng.uniform(3.0, 6.0), rng.uniform(2.7, 3.2))
    rt_target = rng.uniform(0.27, 0.42)
    volume = dims[0] * dims[1] * dims[2]
    surface = 2 * (dims[0] * dims[1] + dims[0] * dims[2] + dims[1] * dims[2])
    absorption = 0.161 * volume / (surface * rt_target / _SABINE_BIAS)
    return RoomSpec(dims_m=dims, absorption=float(np.clip(absorption, 0.15, 0.8)))


def export_brir(path_base, brir: BinauralImpulseResponse, room: RoomSpec,
                seed=None) -> None:
    """Write a BRIR as stereo float32 WAV plus a JSON geometry sidecar."""
    write_wav(str(path_base) + ".wav", brir.as_waveform(), encoding="float32")
    sidecar = {
        "rt60_s": brir.meta.get("rt60_s"),
        "azimuth_deg": brir.meta.get("source_azimuth_deg"),
        "elevation_deg": brir.meta.get("source_elevation_deg"),
        "distance_m": brir.meta.get("distance_m"),
        "room": {"dims_m": list(room.dims_m), "absorption": room.absorption,
                 "max_order": room.max_order},
        "seed": seed,
    }
    Path(str(path_base) + ".json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_brir(path_base) -> BinauralImpulseResponse:
    """Read back a BRIR written by export_brir (stereo WAV + JSON sidecar).

    Externally produced BRIRs in the same layout are accepted too, which is
    how measured or ray-traced impulse responses enter the pipeline.
    """
    wave = read_wav(str(path_base) + ".wav")
    if wave.channels != 2:
        raise ValueError(f"{path_base}.wav: BRIR must be stereo")
    sidecar = json.loads(Path(str(path_base) + ".json").read_text(encoding="utf-8"))
    meta = {"rt60_s": sidecar.get("rt60_s"),
            "source_azimuth_deg": sidecar.get("azimuth_deg"),
            "source_elevation_deg": sidecar.get("elevation_deg"),
            "distance_m": sidecar.get("distance_m")}
    return BinauralImpulseResponse(left=wave.data[0], right=wave.data[1],
                                   rate_hz=wave.rate_hz, meta=meta)
