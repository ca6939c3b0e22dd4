"""Array geometry, far-field steering and delay-and-sum output power."""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .dsp import StftConfig


@dataclass(frozen=True)
class ArrayGeometry:
    mic_positions: np.ndarray
    reference_index: int = 0
    speed_of_sound: float = 343.0

    def __post_init__(self):
        pos = np.array(self.mic_positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 2:
            raise ValueError("need at least 2 microphones with 3-D coordinates")
        if not 0 <= self.reference_index < pos.shape[0]:
            raise ValueError("reference_index out of range")
        pos.setflags(write=False)
        object.__setattr__(self, "mic_positions", pos)

    @property
    def channels(self):
        return self.mic_positions.shape[0]

    def tdoa(self, azimuth):
        """Far-field arrival delays ``tau_m(theta)`` relative to the reference mic.

        A plane wave from azimuth ``theta`` reaches mic ``m`` earlier by
        ``(p_m - p_ref) . u(theta) / c``.  Accepts a scalar or an array of azimuths; the result has a trailing
        channel axis.
        """
        az = np.asarray(azimuth, dtype=np.float64)
        u = np.stack([np.cos(az), np.sin(az), np.zeros_like(az)], axis=-1)
        rel = self.mic_positions - self.mic_positions[self.reference_index]
        return -(u @ rel.T) / self.speed_of_sound

    def rotated(self, delta):
        c, s = np.cos(delta), np.sin(delta)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return ArrayGeometry(
            self.mic_positions @ rot.T, self.reference_index, self.speed_of_sound
        )

    def to_dict(self):
        return {
            "mic_positions": self.mic_positions.tolist(),
            "reference_index": self.reference_index,
            "speed_of_sound": self.speed_of_sound,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mic_positions"]), d["reference_index"], d["speed_of_sound"])


def circular_array(n_mics=3, diameter=0.10, speed_of_sound=343.0):
    """Uniform circular array in the horizontal plane, mic 0 on the x axis."""
    ang = 2 * np.pi * np.arange(n_mics) / n_mics
    r = diameter / 2
    pos = np.stack([r * np.cos(ang), r * np.sin(ang), np.zeros(n_mics)], axis=1)
    return ArrayGeometry(pos, 0, speed_of_sound)


@dataclass(frozen=True)
class SteeringVector:
    values: np.ndarray  # (channels, bins)
    azimuth: float
    geometry: ArrayGeometry


def steering_vector(geom, azimuth, cfg=StftConfig()):
    az = float(np.mod(azimuth, 2 * np.pi))
    tau = geom.tdoa(az)
    values = np.exp(-2j * np.pi * cfg.freqs()[None, :] * tau[:, None])
    values[geom.reference_index] = 1.0
    return SteeringVector(values, az, geom)


def default_band(cfg=StftConfig(), lo_hz=200.0, hi_hz=2000.0):
    return cfg.band_bins(lo_hz, hi_hz)


def _check_band(band, bins):
    k0, k1 = band
    if k1 <= k0:
        raise ValueError("empty band")
    if k0 < 0 or k1 > bins:
        raise ValueError(f"band {band} outside [0, {bins})")
    return int(k0), int(k1)


def das_powers(frame, geom, azimuths, band, cfg=StftConfig()):
    """DAS power at each azimuth in ``azimuths`` (any shape, flattened)."""
    frame = np.asarray(frame, dtype=np.complex128)
    k0, k1 = _check_band(band, frame.shape[1])
    az = np.atleast_1d(np.asarray(azimuths, dtype=np.float64)).ravel()
    tau = np.ascontiguousarray(geom.tdoa(az))
    return kernels.das_powers(np.ascontiguousarray(frame), tau, cfg.bin_hz, k0, k1)


def das_power(frame, geom, azimuth, band, cfg=StftConfig()):
    """Band-averaged power of the DAS beamformer steered to ``azimuth``.

    ``P = sum_k |a_k^H Y_k|^2 / (channels^2 * |band|)``.
    """
    return float(das_powers(frame, geom, [azimuth], band, cfg)[0])


def das_power_map(frame, geom, grid, band, cfg=StftConfig()):
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("empty grid")
    return list(zip(grid.tolist(), das_powers(frame, geom, grid, band, cfg).tolist()))
