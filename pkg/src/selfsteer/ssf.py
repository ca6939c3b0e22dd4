"""Spatially selective mask filters.

Two non-learned filters share one interface:

* ``oracle``: magnitude-ratio mask of the ground-truth target image,
  weighted by how well the directional cue points at the target.  The
  steering gain is flat within ``steer_pass_deg`` and tapers to zero at
  ``steer_stop_deg``; the remaining weight goes to the neutral value
  ``steer_neutral``.  A perfect cue therefore yields exactly
  ``|S| / (|S| + |Y - S|)``.  ``steer_interferer=True`` additionally passes
  the interferer when the cue points at it, and ``steered=False`` ignores
  the cue entirely.
* ``coherence``: normalised inner product between the observation and the
  steering vector of the cue, smoothed over frames and raised to the
  power ``sharpness``.

Masks are real and in [0, 1].  MISO masks have shape ``(bins,)`` and act on
the reference channel, MIMO masks have shape ``(channels, bins)``.
"""

from dataclasses import dataclass

import numpy as np

from .dsp import StftConfig, stft
from .geom import circular_array, steering_vector

OUT_OF_BAND = 0.5


@dataclass(frozen=True)
class SsfParams:
    kind: str = "oracle"  # "oracle" or "coherence"
    mode: str = "mimo"  # "miso" or "mimo"
    sharpness: float = 2.0
    smoothing: float = 0.6
    oracle_degrade: float = 0.0
    band_hz: tuple = (200.0, 2000.0)
    steered: bool = True
    steer_pass_deg: float = 5.0
    steer_stop_deg: float = 30.0
    steer_neutral: float | None = OUT_OF_BAND
    steer_interferer: bool = False

    def __post_init__(self):
        if self.kind not in ("oracle", "coherence"):
            raise ValueError(f"unknown SSF kind {self.kind!r}")
        if self.mode not in ("miso", "mimo"):
            raise ValueError(f"unknown SSF mode {self.mode!r}")
        if self.sharpness <= 0 or not 0 <= self.smoothing < 1:
            raise ValueError("sharpness must be > 0 and smoothing in [0, 1)")
        if not 0 <= self.oracle_degrade <= 1:
            raise ValueError("oracle_degrade must lie in [0, 1]")
        if self.steer_neutral is not None and not 0 <= self.steer_neutral <= 1:
            raise ValueError("steer_neutral must lie in [0, 1]")
        if self.steer_stop_deg < self.steer_pass_deg:
            raise ValueError("steer_stop_deg must be >= steer_pass_deg")


class SsfContext:
    """Per-stream state: smoothing accumulator or oracle frame cursor."""

    def __init__(self, params, geom=None, cfg=StftConfig(), truth=None):
        self.params = params
        self.geom = circular_array() if geom is None else geom
        self.cfg = cfg
        self.band = cfg.band_bins(*params.band_hz)
        self.smoothed = None
        self.cursor = 0
        self.target = self.interferer = self.trajectories = None
        if params.kind == "oracle":
            if truth is None:
                raise ValueError("oracle requires ground truth")
            self.target = stft(truth.target_direct, cfg).data
            self.interferer = stft(truth.interferer_image, cfg).data
            self.trajectories = np.asarray(truth.trajectories)

    def reset(self):
        self.smoothed = None
        self.cursor = 0


def new_context(params, geom=None, cfg=StftConfig(), truth=None):
    return SsfContext(params, geom, cfg, truth)


def steering_gain(delta, pass_rad, stop_rad):
    """Flat-top raised-cosine gain of an angular distance ``delta`` (rad)."""
    d = np.abs((np.asarray(delta) + np.pi) % (2 * np.pi) - np.pi)
    if stop_rad <= pass_rad:
        return np.where(d <= pass_rad, 1.0, 0.0)
    x = np.clip((d - pass_rad) / (stop_rad - pass_rad), 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * x))


def _ratio(part, frame):
    a = np.abs(part)
    den = a + np.abs(frame - part)
    return np.divide(a, den, out=np.zeros_like(a), where=den > 0)


def _oracle_mask(frame, theta, ctx):
    p = ctx.params
    t = ctx.cursor
    if t >= ctx.target.shape[1]:
        raise IndexError("oracle cursor ran past the ground truth")
    s, i = ctx.target[:, t, :], ctx.interferer[:, t, :]
    m_t = _ratio(s, frame)
    if p.steered:
        pr, sr = np.radians(p.steer_pass_deg), np.radians(p.steer_stop_deg)
        g_t = steering_gain(theta - ctx.trajectories[0, t], pr, sr)
        g_i = 0.0
        if p.steer_interferer:
            g_i = steering_gain(theta - ctx.trajectories[1, t], pr, sr)
        mask = g_t * m_t
        if g_i > 0:
            mask = mask + g_i * _ratio(i, frame)
        if p.steer_neutral is not None:
            mask = mask + (1.0 - max(g_t, g_i)) * p.steer_neutral
    else:
        mask = m_t
    mask = np.clip(mask, 0.0, 1.0)
    if p.oracle_degrade > 0:
        mask = (1.0 - p.oracle_degrade) * mask + p.oracle_degrade
    return mask


def _coherence_mask(frame, theta, ctx):
    p = ctx.params
    k0, k1 = ctx.band
    a = steering_vector(ctx.geom, theta, ctx.cfg).values[:, k0:k1]
    y = frame[:, k0:k1]
    num = np.abs(np.sum(np.conj(a) * y, axis=0))
    den = np.sqrt(a.shape[0]) * np.linalg.norm(y, axis=0)
    c = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    c = np.minimum(c, 1.0)
    if ctx.smoothed is None:
        ctx.smoothed = c
    else:
        ctx.smoothed = p.smoothing * ctx.smoothed + (1.0 - p.smoothing) * c
    mask = np.full(frame.shape[1], OUT_OF_BAND)
    mask[k0:k1] = ctx.smoothed**p.sharpness
    return np.broadcast_to(mask, frame.shape).copy()


def _mask(frame, theta, ctx):
    frame = np.asarray(frame)
    if ctx.params.kind == "oracle":
        m = _oracle_mask(frame, theta, ctx)
    else:
        m = _coherence_mask(frame, theta, ctx)
    ctx.cursor += 1
    return m


def mask_miso(frame, theta, ctx):
    """Reference-channel mask steered by the same-frame cue ``theta``."""
    return _mask(frame, theta, ctx)[ctx.geom.reference_index], ctx


def mask_mimo(frame, theta_prev, ctx):
    """Per-channel mask steered by the previous-frame estimate."""
    return _mask(frame, theta_prev, ctx), ctx


def apply_mask(frame, mask, reference_index=0):
    frame = np.asarray(frame)
    mask = np.asarray(mask)
    if mask.ndim == 1:
        if mask.shape[0] != frame.shape[-1]:
            raise ValueError(f"mask shape {mask.shape} does not match frame {frame.shape}")
        return mask * frame[reference_index]
    if mask.shape != frame.shape:
        raise ValueError(f"mask shape {mask.shape} does not match frame {frame.shape}")
    return mask * frame
