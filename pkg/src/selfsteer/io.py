"""Scenario directories, WAV files and truth.json."""

import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .dsp import StftConfig
from .geom import ArrayGeometry
from .scene import ScenarioTruth

TRUTH_FILE = "truth.json"
MIXTURE_FILE = "mixture.wav"
TARGET_FILE = "target_direct.wav"
INTERFERER_FILE = "interferer.wav"
REFLECTIONS_FILE = "target_reflections.wav"
MANIFEST_FILE = "manifest.json"


class DataError(Exception):
    """Unreadable or inconsistent input data."""


def write_wav(path, data, sample_rate=16000):
    """Write ``(channels, samples)`` as 32-bit float PCM."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float32))
    wavfile.write(str(path), sample_rate, np.ascontiguousarray(data.T))


def read_wav(path, expect_rate=16000):
    """Read a WAV file as float64 ``(channels, samples)``."""
    try:
        rate, data = wavfile.read(str(path))
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if rate != expect_rate:
        raise DataError(f"{path}: sample rate {rate} Hz, expected {expect_rate} Hz")
    if np.issubdtype(data.dtype, np.integer):
        data = data / float(np.iinfo(data.dtype).max)
    data = np.asarray(data, dtype=np.float64)
    return data[None, :] if data.ndim == 1 else data.T


def load_audio_pool(directory, sample_rate=16000):
    """All mono WAV files under ``directory`` (sorted by path)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"audio pool {directory} is not a directory")
    files = sorted(directory.rglob("*.wav"))
    if not files:
        raise DataError(f"audio pool {directory} contains no .wav files")
    pool = []
    for f in files:
        x = read_wav(f, sample_rate)
        if x.shape[0] != 1:
            raise DataError(f"{f}: expected mono audio, got {x.shape[0]} channels")
        pool.append(x[0])
    return pool


def _finite_or_none(v):
    return float(v) if np.isfinite(v) else None


def truth_dict(truth, scene_id, geom, cfg, reverb=None):
    return {
        "scene_id": scene_id,
        "seed": truth.seed,
        "frames": int(truth.frames),
        "theta_deg": [np.degrees(tr).tolist() for tr in truth.trajectories],
        "r": truth.meta["r"],
        "height": truth.meta["height"],
        "sigma": truth.meta["sigma"],
        "snr_db": _finite_or_none(truth.snr_db),
        "sir_db": _finite_or_none(truth.sir_db),
        "geometry": geom.to_dict(),
        "stft": {"sample_rate": cfg.sample_rate, "window_len": cfg.window_len, "hop": cfg.hop},
        "reverb": None if reverb is None else {
            "room_dims": list(reverb.room_dims),
            "array_center": list(reverb.array_center),
            "absorption": reverb.absorption,
        },
    }


def save_scenario(directory, truth, scene_id, geom, cfg=StftConfig(), reverb=None):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_wav(d / MIXTURE_FILE, truth.mixture, cfg.sample_rate)
    write_wav(d / TARGET_FILE, truth.target_direct, cfg.sample_rate)
    write_wav(d / INTERFERER_FILE, truth.interferer_image, cfg.sample_rate)
    if np.any(truth.target_reflections):
        write_wav(d / REFLECTIONS_FILE, truth.target_reflections, cfg.sample_rate)
    with open(d / TRUTH_FILE, "w", encoding="utf-8") as fh:
        json.dump(truth_dict(truth, scene_id, geom, cfg, reverb), fh, indent=1)
        fh.write("\n")


def load_scenario(directory):
    """Load a scenario directory; returns ``(truth, geometry, stft_config, meta)``."""
    d = Path(directory)
    try:
        with open(d / TRUTH_FILE, encoding="utf-8") as fh:
            meta = json.load(fh)
        cfg = StftConfig(**meta["stft"])
        geom = ArrayGeometry.from_dict(meta["geometry"])
        theta = np.radians(np.asarray(meta["theta_deg"], dtype=np.float64))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{d}: invalid {TRUTH_FILE}: {exc}") from exc
    mixture = read_wav(d / MIXTURE_FILE, cfg.sample_rate)
    target = read_wav(d / TARGET_FILE, cfg.sample_rate)
    interferer = read_wav(d / INTERFERER_FILE, cfg.sample_rate)
    refl_path = d / REFLECTIONS_FILE
    refl = read_wav(refl_path, cfg.sample_rate) if refl_path.exists() else np.zeros_like(target)
    shapes = {mixture.shape, target.shape, interferer.shape, refl.shape}
    if len(shapes) != 1:
        raise DataError(f"{d}: channel/sample counts differ between WAV files")
    if mixture.shape[0] != geom.channels:
        raise DataError(f"{d}: {mixture.shape[0]} channels but geometry has {geom.channels}")
    if cfg.n_frames(mixture.shape[1]) < theta.shape[1]:
        raise DataError(f"{d}: audio shorter than the {theta.shape[1]}-frame trajectory")
    noise = mixture - target - interferer - refl
    truth = ScenarioTruth(
        trajectories=theta,
        target_direct=target,
        interferer_image=interferer,
        target_reflections=refl,
        noise=noise,
        mixture=mixture,
        snr_db=meta["snr_db"] if meta["snr_db"] is not None else float("inf"),
        sir_db=meta["sir_db"] if meta["sir_db"] is not None else float("inf"),
        seed=meta.get("seed"),
        meta={k: meta[k] for k in ("r", "height", "sigma", "scene_id")},
    )
    return truth, geom, cfg, meta


def list_scenes(directory):
    """Scene directories listed in the manifest, or every subdir with a truth file."""
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"scenes directory {d} does not exist")
    manifest = d / MANIFEST_FILE
    if manifest.exists():
        with open(manifest, encoding="utf-8") as fh:
            return [d / s for s in json.load(fh)["scenes"]]
    return sorted(p.parent for p in d.glob(f"*/{TRUTH_FILE}"))
