"""Frame-sequential tracker/SSF orchestration.

``run_concat``: the tracker sees the raw observation and hands its
same-frame estimate to a MISO mask.  ``run_ar``: the MIMO mask is steered
by the previous estimate and the tracker runs on the masked multichannel
output.  ``run_strong``: ground-truth cues, no tracker.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dsp import StftConfig
from .geom import circular_array
from .ssf import SsfParams, apply_mask, mask_mimo, mask_miso, new_context
from .tracker import ParticleFilter, TrackerConfig

CONCAT = "concat"
AR = "ar"
STRONG = "strong"


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = AR
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    ssf: SsfParams = field(default_factory=SsfParams)
    theta0: float | None = None  # defaults to the truth's initial target azimuth
    record_particles: bool = False
    record_masks: bool = False
    geometry: object = None
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        if self.mode not in (CONCAT, AR, STRONG):
            raise ValueError(f"unknown pipeline mode {self.mode!r}")
        if self.mode == AR and self.ssf.mode != "mimo":
            raise ValueError("autoregressive mode requires a MIMO SSF")

    def with_(self, **kw):
        return replace(self, **kw)

    def geom(self):
        return circular_array() if self.geometry is None else self.geometry


@dataclass
class RunTrace:
    theta_est: np.ndarray | None  # (frames,) rad, None for strong guidance
    n_eff: np.ndarray | None
    resampled: np.ndarray | None
    enhanced: np.ndarray  # (frames, bins) reference channel
    wall_time: np.ndarray  # seconds per frame
    particles: list | None = None
    masks: list | None = None

    @property
    def frames(self):
        return self.enhanced.shape[0]


def _theta0(cfg, truth):
    if cfg.theta0 is not None:
        return float(cfg.theta0)
    if truth is None:
        raise ValueError("theta0 is required when no ground truth is given")
    return float(truth.trajectories[0, 0])


def _context(cfg, truth):
    if cfg.ssf.kind == "oracle" and truth is None:
        raise ValueError("oracle requires ground truth")
    return new_context(cfg.ssf, cfg.geom(), cfg.stft, truth)


class _Recorder:
    def __init__(self, spec, cfg, tracking=True):
        T = spec.frames
        self.cfg = cfg
        self.theta = np.empty(T) if tracking else None
        self.n_eff = np.empty(T) if tracking else None
        self.resampled = np.zeros(T, dtype=bool) if tracking else None
        self.enhanced = np.empty((T, spec.bins), dtype=np.complex128)
        self.wall = np.empty(T)
        self.particles = [] if cfg.record_particles and tracking else None
        self.masks = [] if cfg.record_masks else None

    def track(self, t, info, pf):
        self.theta[t] = info.estimate.theta
        self.n_eff[t] = info.n_eff
        self.resampled[t] = info.resampled
        if self.particles is not None:
            self.particles.append(pf.particles.copy())

    def mask(self, m):
        if self.masks is not None:
            self.masks.append(np.array(m))

    def trace(self):
        return RunTrace(self.theta, self.n_eff, self.resampled, self.enhanced,
                        self.wall, self.particles, self.masks)


def run_concat(spec, cfg, truth=None):
    geom = cfg.geom()
    ref = geom.reference_index
    pf = ParticleFilter(_theta0(cfg, truth), cfg.tracker, geom, cfg.stft)
    ctx = _context(cfg, truth)
    rec = _Recorder(spec, cfg)
    for t in range(spec.frames):
        t0 = time.perf_counter()
        y = spec.data[:, t, :]
        info = pf.step(y)
        m, ctx = mask_miso(y, info.estimate.theta, ctx)
        rec.enhanced[t] = apply_mask(y, m, ref)
        rec.wall[t] = time.perf_counter() - t0
        rec.track(t, info, pf)
        rec.mask(m)
    return rec.trace()


def run_ar(spec, cfg, truth=None, forced_estimates=None):
    """Self-steering loop.

    ``forced_estimates`` replaces the tracker output in the feedback path
    (the tracker still runs and is recorded); used for perfect-tracking
    comparisons.
    """
    if cfg.ssf.mode != "mimo":
        raise ValueError("autoregressive mode requires a MIMO SSF")
    geom = cfg.geom()
    ref = geom.reference_index
    theta0 = _theta0(cfg, truth)
    pf = ParticleFilter(theta0, cfg.tracker, geom, cfg.stft)
    ctx = _context(cfg, truth)
    rec = _Recorder(spec, cfg)
    guide = theta0
    for t in range(spec.frames):
        t0 = time.perf_counter()
        y = spec.data[:, t, :]
        m, ctx = mask_mimo(y, guide, ctx)
        s_hat = apply_mask(y, m)
        info = pf.step(s_hat)
        rec.enhanced[t] = s_hat[ref]
        rec.wall[t] = time.perf_counter() - t0
        rec.track(t, info, pf)
        rec.mask(m)
        guide = info.estimate.theta if forced_estimates is None else float(forced_estimates[t])
    return rec.trace()


def run_strong(spec, cfg, truth, cue_lag=0):
    """Ground-truth cue each frame (``cue_lag`` frames old, clamped at 0)."""
    if truth is None:
        raise ValueError("strong guidance requires ground truth")
    geom = cfg.geom()
    ref = geom.reference_index
    ctx = _context(cfg, truth)
    rec = _Recorder(spec, cfg, tracking=False)
    traj = truth.trajectories[0]
    for t in range(spec.frames):
        t0 = time.perf_counter()
        y = spec.data[:, t, :]
        cue = float(traj[max(t - cue_lag, 0)])
        if cfg.ssf.mode == "mimo":
            m, ctx = mask_mimo(y, cue, ctx)
        else:
            m, ctx = mask_miso(y, cue, ctx)
        rec.enhanced[t] = apply_mask(y, m, ref)[ref] if m.ndim == 2 else apply_mask(y, m, ref)
        rec.wall[t] = time.perf_counter() - t0
        rec.mask(m)
    return rec.trace()


def run(spec, cfg, truth=None):
    if cfg.mode == CONCAT:
        return run_concat(spec, cfg, truth)
    if cfg.mode == AR:
        return run_ar(spec, cfg, truth)
    return run_strong(spec, cfg, truth)
