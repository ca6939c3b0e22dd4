"""Bootstrap particle filter over the target azimuth.

Particles carry an unwrapped azimuth and an angular velocity.  The proposal
is the state-transition density (angular random walk or white-acceleration
CV model), weights are updated with a floored and sharpened delay-and-sum
power, and systematic resampling runs only when the effective sample size
drops below ``resample_threshold * N``.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .dsp import StftConfig
from .geom import das_powers

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AzimuthState:
    theta: float
    thetadot: float = 0.0
    tie: bool = False


@dataclass
class ParticleSet:
    theta: np.ndarray
    thetadot: np.ndarray
    weights: np.ndarray

    @property
    def n(self):
        return self.theta.shape[0]

    def copy(self):
        return ParticleSet(self.theta.copy(), self.thetadot.copy(), self.weights.copy())


@dataclass(frozen=True)
class TransitionModel:
    kind: str = "rw"  # "rw" or "cv"
    sigma: float = 0.1  # rad/frame for rw, rad/s^2 for cv
    dt: float = 0.016

    def __post_init__(self):
        if self.kind not in ("rw", "cv"):
            raise ValueError(f"unknown transition kind {self.kind!r}")
        if self.sigma < 0 or self.dt <= 0:
            raise ValueError("transition parameters must be nonnegative")

    @classmethod
    def rw(cls, sigma_rw=0.1):
        return cls("rw", sigma_rw)

    @classmethod
    def cv(cls, sigma_cv=8.0, dt=0.016):
        return cls("cv", sigma_cv, dt)


@dataclass(frozen=True)
class TrackerConfig:
    n_particles: int = 50
    transition: TransitionModel = field(default_factory=TransitionModel)
    likelihood_band: tuple = (200.0, 2000.0)
    likelihood_floor: float = 0.1
    likelihood_exponent: float = 4.0
    resample_threshold: float = 0.5
    init_spread_theta: float = np.radians(2.0)
    init_spread_vel: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.likelihood_floor < 0 or self.likelihood_exponent < 0:
            raise ValueError("likelihood floor and exponent must be nonnegative")
        if not 0 < self.resample_threshold <= 1:
            raise ValueError("resample_threshold must lie in (0, 1]")

    def with_(self, **kw):
        return replace(self, **kw)


def init(theta0, cfg, rng):
    if not np.isfinite(theta0):
        raise ValueError("theta0 must be finite")
    n = cfg.n_particles
    theta = theta0 + cfg.init_spread_theta * rng.standard_normal(n) if cfg.init_spread_theta > 0 else np.full(n, float(theta0))
    if cfg.transition.kind == "cv" and cfg.init_spread_vel > 0:
        vel = cfg.init_spread_vel * rng.standard_normal(n)
    else:
        vel = np.zeros(n)
    return ParticleSet(theta, vel, np.full(n, 1.0 / n))


def predict(ps, model, rng):
    n = ps.n
    if model.kind == "rw":
        theta = ps.theta + model.sigma * rng.standard_normal(n) if model.sigma > 0 else ps.theta.copy()
        return ParticleSet(theta, ps.thetadot.copy(), ps.weights.copy())
    eps = model.sigma * rng.standard_normal(n) if model.sigma > 0 else np.zeros(n)
    dt = model.dt
    theta = ps.theta + dt * ps.thetadot + 0.5 * dt * dt * eps
    vel = ps.thetadot + dt * eps
    return ParticleSet(theta, vel, ps.weights.copy())


def likelihood(frame, theta, geom, cfg, stft_cfg=StftConfig()):
    """Floored, exponentiated DAS power relative to its mean over the particles."""
    if cfg.likelihood_exponent == 0:
        return np.ones_like(theta)
    band = stft_cfg.band_bins(*cfg.likelihood_band)
    p = das_powers(frame, geom, theta, band, stft_cfg)
    mean = p.mean()
    if not mean > 0:
        return np.ones_like(theta)
    return np.maximum(p / mean, cfg.likelihood_floor) ** cfg.likelihood_exponent


def reweight(ps, frame, geom, cfg, stft_cfg=StftConfig()):
    """Multiply the weights by the DAS pseudo-likelihood and renormalise.

    A total weight that underflows or goes non-finite resets the set to
    uniform weights.
    """
    w = ps.weights * likelihood(frame, ps.theta, geom, cfg, stft_cfg)
    total = w.sum()
    if not (np.isfinite(total) and total > 0):
        log.debug("weight underflow, resetting to uniform")
        w = np.full(ps.n, 1.0 / ps.n)
    else:
        w = w / total
    return ParticleSet(ps.theta, ps.thetadot, w)


def effective_sample_size(ps):
    w = ps.weights if isinstance(ps, ParticleSet) else np.asarray(ps)
    return 1.0 / np.sum(w * w)


def systematic_resample(weights, rng):
    return kernels.systematic_indices(np.ascontiguousarray(weights, dtype=np.float64), rng.random())


def maybe_resample(ps, threshold_ratio, rng):
    if effective_sample_size(ps) >= threshold_ratio * ps.n:
        return ps, False
    idx = systematic_resample(ps.weights, rng)
    return ParticleSet(ps.theta[idx], ps.thetadot[idx], np.full(ps.n, 1.0 / ps.n)), True


def _nearest_branch(angle, ref):
    return ref + (angle - ref + np.pi) % (2 * np.pi) - np.pi


def estimate(ps, prev=None):
    """Posterior mean: circular mean of azimuth, arithmetic mean of velocity.

    The azimuth is placed on the unwrapped branch nearest ``prev``.  An exact
    zero resultant keeps ``prev`` and sets ``tie``.
    """
    w = ps.weights
    s = np.dot(w, np.sin(ps.theta))
    c = np.dot(w, np.cos(ps.theta))
    vel = float(np.dot(w, ps.thetadot))
    if np.hypot(s, c) < 1e-12:
        base = prev.theta if prev is not None else float(np.dot(w, ps.theta))
        return AzimuthState(base, vel, tie=True)
    mean = float(np.arctan2(s, c))
    if prev is not None:
        mean = float(_nearest_branch(mean, prev.theta))
    return AzimuthState(mean, vel)


@dataclass
class StepInfo:
    estimate: AzimuthState
    n_eff: float
    resampled: bool


class ParticleFilter:
    """Stateful tracker instance owning its particles and RNG."""

    def __init__(self, theta0, cfg=TrackerConfig(), geom=None, stft_cfg=StftConfig(), rng=None):
        from .geom import circular_array

        self.cfg = cfg
        self.geom = circular_array() if geom is None else geom
        self.stft_cfg = stft_cfg
        self.rng = np.random.default_rng(cfg.seed) if rng is None else rng
        self.particles = init(theta0, cfg, self.rng)
        self.last = AzimuthState(float(theta0))

    def step(self, frame):
        ps, est, n_eff, resampled = step(self.particles, frame, self.geom, self.cfg,
                                         self.rng, self.last, self.stft_cfg)
        self.particles, self.last = ps, est
        return StepInfo(est, n_eff, resampled)


def step(ps, frame, geom, cfg, rng, prev=None, stft_cfg=StftConfig()):
    """One SIS cycle: predict, reweight, conditional resample, estimate.

    Returns ``(particles, estimate, n_eff, resampled)`` where ``n_eff`` is
    measured before the resampling decision.
    """
    ps = predict(ps, cfg.transition, rng)
    ps = reweight(ps, frame, geom, cfg, stft_cfg)
    n_eff = effective_sample_size(ps)
    ps, resampled = maybe_resample(ps, cfg.resample_threshold, rng)
    return ps, estimate(ps, prev), n_eff, resampled
