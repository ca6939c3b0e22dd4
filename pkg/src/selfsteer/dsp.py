"""STFT analysis and weighted overlap-add synthesis.

Frames start at sample 0 without centering or padding, so frame ``t``
covers samples ``[t * hop, t * hop + window_len)``.
"""

from dataclasses import dataclass, field

import numpy as np


def sqrt_hann(n):
    """Square-root Hann window sampled at half-integer offsets.

    ``w[n] = sin(pi * (n + 0.5) / N)`` is strictly positive and its square
    sums to exactly one at hop ``N / 2``.
    """
    return np.sin(np.pi * (np.arange(n) + 0.5) / n)


@dataclass(frozen=True)
class StftConfig:
    sample_rate: int = 16000
    window_len: int = 512
    hop: int = 256
    window: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.window_len <= 0 or self.hop <= 0 or self.window_len % 2:
            raise ValueError("window_len must be positive and even, hop positive")
        object.__setattr__(self, "window", sqrt_hann(self.window_len))

    @property
    def bins(self):
        return self.window_len // 2 + 1

    @property
    def frame_dt(self):
        return self.hop / self.sample_rate

    @property
    def bin_hz(self):
        return self.sample_rate / self.window_len

    def freqs(self):
        return np.arange(self.bins) * self.bin_hz

    def band_bins(self, lo_hz, hi_hz):
        """Half-open bin range ``(k0, k1)`` covering ``[lo_hz, hi_hz]``."""
        k0 = int(np.ceil(lo_hz / self.bin_hz - 1e-9))
        k1 = int(np.floor(hi_hz / self.bin_hz + 1e-9)) + 1
        k0, k1 = max(k0, 0), min(k1, self.bins)
        if k1 <= k0:
            raise ValueError(f"empty band {lo_hz}-{hi_hz} Hz")
        return k0, k1

    def n_frames(self, n_samples):
        return (n_samples - self.window_len) // self.hop + 1

    def n_samples(self, n_frames):
        """Shortest signal length that yields ``n_frames`` frames."""
        return (n_frames - 1) * self.hop + self.window_len


@dataclass
class Spectrogram:
    """Complex STFT data indexed ``[channel, frame, bin]``."""

    data: np.ndarray
    config: StftConfig

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError("spectrogram data must be (channels, frames, bins)")
        if self.data.shape[2] != self.config.bins:
            raise ValueError(
                f"bins {self.data.shape[2]} inconsistent with window_len "
                f"{self.config.window_len}"
            )

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def frames(self):
        return self.data.shape[1]

    @property
    def bins(self):
        return self.data.shape[2]

    def frame(self, t):
        return self.data[:, t, :]


def _as_multichannel(signal):
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("signal must be 1-D or (channels, samples)")
    return x


def stft(signal, cfg=StftConfig()):
    x = _as_multichannel(signal)
    if x.shape[1] < cfg.window_len:
        raise ValueError("input too short")
    if not np.all(np.isfinite(x)):
        raise ValueError("invalid signal")
    n_frames = cfg.n_frames(x.shape[1])
    idx = np.arange(n_frames)[:, None] * cfg.hop + np.arange(cfg.window_len)[None, :]
    frames = x[:, idx] * cfg.window
    return Spectrogram(np.fft.rfft(frames, axis=-1), cfg)


def istft(spec):
    cfg = spec.config
    if spec.bins != cfg.bins:
        raise ValueError("spectrogram bins inconsistent with config")
    frames = np.fft.irfft(spec.data, n=cfg.window_len, axis=-1) * cfg.window
    n_frames = spec.frames
    n = cfg.n_samples(n_frames)
    out = np.zeros((spec.channels, n))
    env = np.zeros(n)
    w2 = cfg.window**2
    for t in range(n_frames):
        s = t * cfg.hop
        out[:, s : s + cfg.window_len] += frames[:, t]
        env[s : s + cfg.window_len] += w2
    np.divide(out, env, out=out, where=env > 1e-2)
    return out


def interior(n_samples, cfg=StftConfig()):
    """Slice of samples excluded from edge effects of overlap-add."""
    return slice(cfg.window_len, n_samples - cfg.window_len)
