"""Synthetic moving-speaker scenes.

Speakers move on circles around the array under a white-acceleration
(constant-velocity) azimuth model.  Each scene is rendered with a per-sample
time-varying fractional delay, then mixed with an interferer and spherically
isotropic noise.  The exact additive decomposition is kept in
:class:`ScenarioTruth`.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dsp import StftConfig
from .geom import ArrayGeometry, circular_array


@dataclass(frozen=True)
class MotionParams:
    dt: float = 0.016
    sigma: float = 0.0
    frames: int = 312
    theta0: float = 0.0
    thetadot0: float = 0.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.frames < 2:
            raise ValueError("frames must be >= 2")


def calibrate_sigma(v_target, r, frames, dt):
    """Perturbation std giving expected absolute speed ``v_target`` at frame ``frames``.

    Inverts ``E|v_t| = dt * r * sqrt((4t - 3) / (2 pi)) * sigma`` where
    ``v_t = r / dt * (theta_t - theta_{t-1})`` and the walk starts at rest.
    """
    for name, val in (("v_target", v_target), ("r", r), ("frames", frames), ("dt", dt)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    return v_target / (dt * r * np.sqrt((4 * frames - 3) / (2 * np.pi)))


def expected_abs_velocity(sigma, r, t, dt):
    return dt * r * np.sqrt((4 * t - 3) / (2 * np.pi)) * sigma


def sample_trajectories(p, rng, n_runs):
    """Vectorised CV sampling: returns ``theta`` and ``thetadot`` of shape (n_runs, frames)."""
    eps = rng.normal(0.0, p.sigma, size=(n_runs, p.frames - 1)) if p.sigma > 0 else np.zeros((n_runs, p.frames - 1))
    vel = np.empty((n_runs, p.frames))
    vel[:, 0] = p.thetadot0
    vel[:, 1:] = p.thetadot0 + p.dt * np.cumsum(eps, axis=1)
    dtheta = p.dt * vel[:, :-1] + 0.5 * p.dt**2 * eps
    theta = np.empty((n_runs, p.frames))
    theta[:, 0] = p.theta0
    theta[:, 1:] = p.theta0 + np.cumsum(dtheta, axis=1)
    return theta, vel


def sample_trajectory(p, rng):
    """One CV trajectory as an array of ``[theta, thetadot]`` rows (unwrapped)."""
    theta, vel = sample_trajectories(p, rng, 1)
    return np.stack([theta[0], vel[0]], axis=1)


def sample_rw_trajectory(theta0, sigma_rw, frames, rng):
    if sigma_rw < 0:
        raise ValueError("sigma_rw must be nonnegative")
    steps = rng.normal(0.0, sigma_rw, size=frames - 1) if sigma_rw > 0 else np.zeros(frames - 1)
    return theta0 + np.concatenate([[0.0], np.cumsum(steps)])


def synthetic_speech(n_samples, rng, sample_rate=16000):
    """Speech-like test signal with syllabic bursts, pauses and formants.

    Voiced segments are harmonic with a drifting pitch and a three-formant
    envelope; unvoiced segments are high-passed noise.  Normalised to unit RMS.
    """
    out = np.zeros(n_samples)
    f0_base = rng.uniform(90.0, 230.0)
    n = 0
    while n < n_samples:
        n += int(rng.uniform(0.04, 0.25 if rng.random() > 0.15 else 0.7) * sample_rate)
        seg = int(rng.uniform(0.08, 0.3) * sample_rate)
        if n >= n_samples:
            break
        seg = min(seg, n_samples - n)
        t = np.arange(seg) / sample_rate
        env = np.sin(np.pi * (np.arange(seg) + 0.5) / seg) ** 0.7
        if rng.random() < 0.8:
            f0 = f0_base * (1.0 + 0.15 * rng.uniform(-1, 1)) * (1.0 + rng.uniform(-0.2, 0.2) * t / max(t[-1], 1e-9))
            phase = 2 * np.pi * np.cumsum(f0) / sample_rate
            formants = np.sort(rng.uniform([250, 800, 2000], [900, 2200, 3500]))
            n_harm = int(4000 / f0.max())
            h = np.arange(1, n_harm + 1)
            fh = h * f0.mean()
            amp = sum(np.exp(-0.5 * ((fh - f) / (0.12 * f + 60)) ** 2) for f in formants) / h**0.5
            sig = (amp[:, None] * np.sin(h[:, None] * phase[None, :] + rng.uniform(0, 2 * np.pi, n_harm)[:, None])).sum(axis=0)
        else:
            noise = rng.normal(size=seg)
            sig = 0.3 * np.diff(np.concatenate([[0.0], noise]))
        out[n : n + seg] += env * sig * rng.uniform(0.4, 1.0)
        n += seg
    rms = np.sqrt(np.mean(out**2))
    return out / rms if rms > 0 else out


def _frame_anchor_samples(n_frames, cfg):
    return np.arange(n_frames) * cfg.hop + cfg.window_len / 2


def circle_positions(trajectory, r, height, n_samples, cfg):
    """Per-sample source position, azimuth interpolated linearly between frame centres."""
    az = np.interp(np.arange(n_samples), _frame_anchor_samples(len(trajectory), cfg), trajectory)
    return np.stack([r * np.cos(az), r * np.sin(az), np.full(n_samples, float(height))], axis=1)


def render_positions(source, positions, geom, sample_rate=16000):
    """Propagate ``source`` from per-sample ``positions`` to every microphone."""
    src = np.asarray(source, dtype=np.float64)
    out = np.empty((geom.channels, positions.shape[0]))
    for m in range(geom.channels):
        dist = np.linalg.norm(positions - geom.mic_positions[m], axis=1)
        delay = dist / geom.speed_of_sound * sample_rate
        gain = 1.0 / np.maximum(dist, 0.1)
        out[m] = kernels.fractional_delay(src, np.ascontiguousarray(delay), np.ascontiguousarray(gain))
    return out


def spatialize(source, trajectory, r, height, geom, cfg=StftConfig()):
    """Direct-path multichannel image of a source moving on a circle of radius ``r``."""
    trajectory = np.asarray(trajectory, dtype=np.float64)
    if trajectory.ndim == 2:
        trajectory = trajectory[:, 0]
    need = len(trajectory) * cfg.hop + cfg.window_len
    if len(source) < need:
        raise ValueError(f"source has {len(source)} samples, trajectory needs {need}")
    n_out = cfg.n_samples(len(trajectory))
    pos = circle_positions(trajectory, r, height, n_out, cfg)
    return render_positions(source, pos, geom, cfg.sample_rate)


def isotropic_noise(channels, samples, geom, cfg=StftConfig(), rng=None, n_waves=64):
    """Approximately spherically isotropic noise from ``n_waves`` far-field plane waves."""
    if samples <= 0:
        raise ValueError("samples must be positive")
    if channels != geom.channels:
        raise ValueError("channel count must match geometry")
    rng = np.random.default_rng() if rng is None else rng
    dirs = rng.normal(size=(n_waves, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    # arrival from direction u reaches mic m earlier by p_m . u / c
    tau = -(dirs @ geom.mic_positions.T) / geom.speed_of_sound
    f = np.fft.rfftfreq(samples, 1.0 / cfg.sample_rate)
    acc = np.zeros((channels, f.size), dtype=np.complex128)
    for w in range(n_waves):
        spec = np.fft.rfft(rng.normal(size=samples))
        acc += spec[None, :] * np.exp(-2j * np.pi * f[None, :] * tau[w][:, None])
    noise = np.fft.irfft(acc, n=samples, axis=1)
    return noise / np.sqrt(np.mean(noise**2))


@dataclass(frozen=True)
class ReverbConfig:
    """First-order shoebox reflections (six wall images per source)."""

    room_dims: tuple = (9.0, 8.0, 3.0)
    array_center: tuple = (4.5, 4.0, 1.5)
    absorption: float = 0.5

    def images(self, positions):
        """Array-relative positions of the six first-order images of ``positions``."""
        dims = np.asarray(self.room_dims, dtype=np.float64)
        c = np.asarray(self.array_center, dtype=np.float64)
        room = positions + c
        out = []
        for axis in range(3):
            for wall in (0.0, dims[axis]):
                img = room.copy()
                img[:, axis] = 2 * wall - room[:, axis]
                out.append(img - c)
        return out

    @property
    def reflection_gain(self):
        return np.sqrt(1.0 - self.absorption)


@dataclass
class SpeakerSpec:
    r: float
    height: float
    motion: MotionParams
    source_audio: np.ndarray
    level_offset_db: float = 0.0  # dB this speaker sits below the target (interferer only)
    trajectory: np.ndarray | None = None  # pre-sampled azimuths, else drawn from motion


@dataclass
class ScenarioTruth:
    trajectories: np.ndarray  # (speakers, frames) unwrapped azimuth in rad
    target_direct: np.ndarray
    interferer_image: np.ndarray
    target_reflections: np.ndarray
    noise: np.ndarray
    mixture: np.ndarray
    snr_db: float
    sir_db: float
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def frames(self):
        return self.trajectories.shape[1]


def _power(x):
    return float(np.mean(np.asarray(x, dtype=np.float64) ** 2))


def _db_ratio(a, b):
    if b == 0:
        return float("inf") if a > 0 else float("nan")
    if a == 0:
        return float("-inf")
    return 10 * np.log10(a / b)


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def _speaker_trajectory(spk, rng):
    if spk.trajectory is not None:
        return np.asarray(spk.trajectory, dtype=np.float64)
    return sample_trajectory(spk.motion, rng)[:, 0]


def mix_scenario(target, interferer, snr_db, geom=None, cfg=StftConfig(), rng=None,
                 reverb=None, min_separation_deg=10.0, seed=None):
    """Render and mix a two-speaker scene.

    The noise gain is solved from measured reference-channel powers so the
    realised SNR equals ``snr_db``; the interferer is scaled so its
    reference-channel direct power sits ``interferer.level_offset_db`` below
    the target's.  ``snr_db = inf`` disables the noise.
    """
    geom = circular_array() if geom is None else geom
    rng = np.random.default_rng(seed) if rng is None else rng
    traj_t = _speaker_trajectory(target, rng)
    traj_i = _speaker_trajectory(interferer, rng)
    if traj_t.shape != traj_i.shape:
        raise ValueError("target and interferer trajectories differ in frame count")
    sep = np.degrees(abs(_wrap(traj_t[0] - traj_i[0])))
    if sep < min_separation_deg:
        raise ValueError(f"initial azimuth separation {sep:.2f} deg below {min_separation_deg} deg")

    ref = geom.reference_index
    n_out = cfg.n_samples(len(traj_t))
    s_direct = spatialize(target.source_audio, traj_t, target.r, target.height, geom, cfg)
    i_direct = spatialize(interferer.source_audio, traj_i, interferer.r, interferer.height, geom, cfg)

    s_refl = np.zeros_like(s_direct)
    i_refl = np.zeros_like(i_direct)
    if reverb is not None:
        for spk, traj, acc in ((target, traj_t, s_refl), (interferer, traj_i, i_refl)):
            pos = circle_positions(traj, spk.r, spk.height, n_out, cfg)
            for img in reverb.images(pos):
                acc += reverb.reflection_gain * render_positions(spk.source_audio, img, geom, cfg.sample_rate)

    p_s = _power(s_direct[ref])
    p_i = _power(i_direct[ref])
    i_gain = np.sqrt(p_s / p_i * 10 ** (-interferer.level_offset_db / 10)) if p_i > 0 else 0.0
    interferer_image = i_gain * (i_direct + i_refl)

    if np.isinf(snr_db) and snr_db > 0:
        noise = np.zeros_like(s_direct)
    else:
        raw = isotropic_noise(geom.channels, n_out, geom, cfg, rng)
        raw_ref = _power(raw[ref])
        g = np.sqrt(p_s / (raw_ref * 10 ** (snr_db / 10))) if raw_ref > 0 else 0.0
        noise = g * raw

    mixture = s_direct + s_refl + interferer_image + noise
    return ScenarioTruth(
        trajectories=np.stack([traj_t, traj_i]),
        target_direct=s_direct,
        interferer_image=interferer_image,
        target_reflections=s_refl,
        noise=noise,
        mixture=mixture,
        snr_db=_db_ratio(p_s, _power(noise[ref])),
        sir_db=_db_ratio(p_s, _power(i_gain * i_direct[ref])),
        seed=seed,
        meta={
            "r": [target.r, interferer.r],
            "height": [target.height, interferer.height],
            "sigma": [target.motion.sigma, interferer.motion.sigma],
        },
    )


def has_crossing(traj_a, traj_b):
    """True if the wrapped azimuth difference changes sign without jumping across +-pi."""
    d = _wrap(np.asarray(traj_a) - np.asarray(traj_b))
    flips = np.nonzero(np.sign(d[1:]) != np.sign(d[:-1]))[0]
    return bool(np.any(np.abs(d[flips]) < np.pi / 2))


@dataclass
class ScenarioTemplate:
    """Randomisation ranges for dataset generation."""

    frames: int = 312
    v_target: float = 1.5
    r_range: tuple = (1.0, 3.0)
    height_range: tuple = (-0.2, 0.2)
    snr_range: tuple = (20.0, 30.0)
    sir_range: tuple = (-5.0, 5.0)
    min_separation_deg: float = 10.0
    require_crossing: bool = False
    max_attempts: int = 200
    reverb: ReverbConfig | None = None
    mic_positions: list | None = None

    def geometry(self):
        if self.mic_positions is None:
            return circular_array()
        return ArrayGeometry(np.asarray(self.mic_positions))

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("audio_pool", None)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario template keys: {sorted(unknown)}")
        if d.get("reverb") is not None:
            d["reverb"] = ReverbConfig(**{k: tuple(v) if isinstance(v, list) else v
                                          for k, v in d["reverb"].items()})
        for k in ("r_range", "height_range", "snr_range", "sir_range"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def draw_trajectories(template, rng, dt=0.016):
    """Speaker geometry and motion for one scene.

    Returns ``(speakers, motions, trajectories)`` where ``speakers`` holds
    ``(r, height, sigma)`` per speaker.  This is the first thing
    :func:`generate_scenario` draws, so it consumes the same random stream.
    """
    speakers = []
    for _ in range(2):
        r = rng.uniform(*template.r_range)
        sigma = calibrate_sigma(template.v_target, r, template.frames, dt)
        speakers.append((r, rng.uniform(*template.height_range), sigma))

    for _ in range(template.max_attempts):
        th0 = rng.uniform(-np.pi, np.pi, size=2)
        if np.degrees(abs(_wrap(th0[0] - th0[1]))) < template.min_separation_deg:
            continue
        motions = [MotionParams(dt, sp[2], template.frames, th0[j]) for j, sp in enumerate(speakers)]
        trajs = [sample_trajectory(m, rng)[:, 0] for m in motions]
        if template.require_crossing and not has_crossing(*trajs):
            continue
        return speakers, motions, trajs
    raise RuntimeError("could not draw trajectories satisfying the template constraints")


def scene_rng(seed):
    return np.random.default_rng(np.random.SeedSequence(seed))


def generate_scenario(template, seed, sources=None, cfg=StftConfig()):
    """Draw a full random scene from ``template``.

    ``sources`` is a list of mono arrays to pick utterances from; ``None``
    uses :func:`synthetic_speech`.  All randomness derives from ``seed``.
    """
    rng = scene_rng(seed)
    geom = template.geometry()
    n_src = template.frames * cfg.hop + cfg.window_len
    dt = cfg.frame_dt

    def draw_audio():
        if sources is None:
            return synthetic_speech(n_src, rng, cfg.sample_rate)
        ok = [s for s in sources if len(s) >= n_src]
        if not ok:
            raise ValueError(f"no source utterance has the required {n_src} samples")
        s = ok[rng.integers(len(ok))]
        start = rng.integers(0, len(s) - n_src + 1)
        return np.asarray(s[start : start + n_src], dtype=np.float64)

    speakers, motions, trajs = draw_trajectories(template, rng, dt)

    specs = [
        SpeakerSpec(sp[0], sp[1], motions[j], draw_audio(), 0.0, trajs[j])
        for j, sp in enumerate(speakers)
    ]
    specs[1].level_offset_db = rng.uniform(*template.sir_range)
    snr = rng.uniform(*template.snr_range)
    return mix_scenario(specs[0], specs[1], snr, geom, cfg, rng, template.reverb,
                        template.min_separation_deg, seed=seed)
