import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from selfsteer.dsp import Spectrogram, StftConfig, interior, istft, stft


def test_window_values_and_cola(cfg):
    w = cfg.window
    assert w.shape == (512,)
    assert np.all(w > 0) and np.all(w <= 1)
    # squared window summed over shifts by the hop must be constant
    env = w[: cfg.hop] ** 2 + w[cfg.hop:] ** 2
    assert np.max(np.abs(env - 1.0)) < 1e-12
    assert cfg.hop == cfg.window_len // 2


def test_config_derived_quantities(cfg):
    assert cfg.bins == 257
    assert cfg.frame_dt == pytest.approx(0.016)
    assert cfg.bin_hz == pytest.approx(31.25)
    assert cfg.band_bins(200, 2000) == (7, 65)
    with pytest.raises(ValueError):
        cfg.band_bins(3000, 2000)


def test_invalid_config():
    with pytest.raises(ValueError):
        StftConfig(window_len=511)
    with pytest.raises(ValueError):
        StftConfig(hop=0)


def test_matches_direct_dft(cfg, rng):
    # explicit DFT-matrix evaluation of the windowed frames
    x = rng.standard_normal(4000)
    ours = stft(x, cfg).data[0]
    n = np.arange(512)
    k = np.arange(257)
    w = np.sin(np.pi * (n + 0.5) / 512)
    basis = np.exp(-2j * np.pi * np.outer(k, n) / 512)
    for t in (0, 5, ours.shape[0] - 1):
        np.testing.assert_allclose(ours[t], basis @ (w * x[t * 256: t * 256 + 512]), atol=1e-9)


def test_zero_signal(cfg):
    spec = stft(np.zeros((3, 4000)), cfg)
    assert spec.data.shape == (3, cfg.n_frames(4000), 257)
    assert not np.any(spec.data)
    assert not np.any(istft(spec))


def test_bin_centre_sinusoid(cfg):
    n = np.arange(8000)
    x = np.cos(2 * np.pi * 10 * 16000 / 512 * n / 16000)
    p = np.abs(stft(x, cfg).data[0, 2:-2]) ** 2
    frac = p[:, 10] / p.sum(axis=1)
    assert np.all(frac >= 0.5)
    # one-sided spectrum of a bin-centred cosine: bins 9..11 hold the window's main lobe
    assert np.all(p[:, 9:12].sum(axis=1) / p.sum(axis=1) >= 0.99)


def test_impulse_magnitude_equals_window(cfg):
    x = np.zeros(4096)
    n0 = 3 * 256 + 100
    x[n0] = 1.0
    spec = stft(x, cfg).data[0]
    t = 3
    np.testing.assert_allclose(np.abs(spec[t]), cfg.window[n0 - t * 256], rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), length=st.integers(2048, 12000))
def test_round_trip_interior(seed, length):
    cfg = StftConfig()
    x = np.random.default_rng(seed).standard_normal((2, length))
    y = istft(stft(x, cfg))
    n = min(y.shape[1], length)
    sl = interior(n, cfg)
    err = np.linalg.norm(y[:, sl] - x[:, sl]) / np.linalg.norm(x[:, sl])
    assert err < 1e-6


def test_identity_mask_round_trip(cfg, rng):
    x = rng.standard_normal((3, 8000))
    spec = stft(x, cfg)
    masked = Spectrogram(spec.data * np.ones_like(spec.data.real), cfg)
    y = istft(masked)
    sl = interior(y.shape[1], cfg)
    assert np.linalg.norm(y[:, sl] - x[:, sl]) / np.linalg.norm(x[:, sl]) < 1e-6


def test_frame_sample_counts(cfg):
    assert cfg.n_frames(cfg.n_samples(312)) == 312
    assert cfg.n_samples(1) == 512


def test_errors(cfg):
    with pytest.raises(ValueError, match="too short"):
        stft(np.zeros(100), cfg)
    with pytest.raises(ValueError):
        stft(np.array([np.nan] * 1000), cfg)
    with pytest.raises(ValueError):
        Spectrogram(np.zeros((1, 3, 100), complex), cfg)


def test_parseval_per_frame(cfg, rng):
    x = rng.standard_normal(5000)
    X = stft(x, cfg).data[0]
    w = np.ones(257)
    w[1:-1] = 2.0  # one-sided spectrum: interior bins stand for two
    for t in range(X.shape[0]):
        seg = cfg.window * x[t * 256: t * 256 + 512]
        assert np.sum(w * np.abs(X[t]) ** 2) / 512 == pytest.approx(np.sum(seg**2), rel=1e-9)


def test_linearity(cfg, rng):
    x, y = rng.standard_normal((2, 3, 3000))
    lhs = stft(2.5 * x - 0.7 * y, cfg).data
    rhs = 2.5 * stft(x, cfg).data - 0.7 * stft(y, cfg).data
    assert np.linalg.norm(lhs - rhs) <= 1e-9 * np.linalg.norm(rhs)
