import numpy as np
import pytest

from selfsteer.dsp import Spectrogram, istft, stft
from selfsteer.metrics import si_sdr
from selfsteer.scene import MotionParams, SpeakerSpec, mix_scenario, synthetic_speech
from selfsteer.ssf import (OUT_OF_BAND, SsfParams, apply_mask, mask_miso, mask_mimo, new_context,
                           steering_gain)

from conftest import plane_wave_frame


@pytest.fixture(scope="module")
def clean_truth():
    """Target alone (silent interferer, no noise), static at 40 deg."""
    from selfsteer.dsp import StftConfig
    from selfsteer.geom import circular_array

    cfg, geom = StftConfig(), circular_array()
    rng = np.random.default_rng(3)
    frames = 40
    n = frames * cfg.hop + cfg.window_len
    m = MotionParams(frames=frames)
    t = SpeakerSpec(2.0, 0.0, m, synthetic_speech(n, rng), 0.0, np.full(frames, np.radians(40)))
    i = SpeakerSpec(2.0, 0.0, m, np.zeros(n), 0.0, np.full(frames, np.radians(-100)))
    return mix_scenario(t, i, np.inf, geom, cfg, rng)


def test_oracle_clean_mask_near_one(clean_truth, geom, cfg):
    ctx = new_context(SsfParams(mode="miso"), geom, cfg, clean_truth)
    Y = stft(clean_truth.mixture, cfg).data
    for t in range(Y.shape[1]):
        m, ctx = mask_miso(Y[:, t], clean_truth.trajectories[0, t], ctx)
        e = np.abs(Y[0, t]) ** 2
        if e.sum() == 0:
            continue
        strong = e >= 0.01 * e.sum()
        assert np.all(m[strong] >= 0.99)


def test_oracle_clean_mimo_reconstructs_target(clean_truth, geom, cfg):
    ctx = new_context(SsfParams(), geom, cfg, clean_truth)
    Y = stft(clean_truth.mixture, cfg).data
    S = stft(clean_truth.target_direct, cfg).data
    out = np.empty_like(Y)
    for t in range(Y.shape[1]):
        m, ctx = mask_mimo(Y[:, t], clean_truth.trajectories[0, t], ctx)
        out[:, t] = apply_mask(Y[:, t], m)
    assert np.linalg.norm(out - S) <= 1e-6 * np.linalg.norm(S)


def test_oracle_requires_truth(geom, cfg):
    with pytest.raises(ValueError, match="ground truth"):
        new_context(SsfParams(), geom, cfg, None)


def test_oracle_neutral_when_cue_misses(short_scene, geom, cfg):
    truth = short_scene
    Y = stft(truth.mixture, cfg).data
    away = truth.trajectories[0, 0] + np.pi
    m, _ = mask_mimo(Y[:, 0], away, new_context(SsfParams(), geom, cfg, truth))
    np.testing.assert_allclose(m, OUT_OF_BAND)
    # pointing at the interferer passes its image only when asked to
    at_i = truth.trajectories[1, 0]
    m, _ = mask_mimo(Y[:, 0], at_i, new_context(SsfParams(steer_interferer=True), geom, cfg, truth))
    S = stft(truth.target_direct, cfg).data[:, 0]
    I = stft(truth.interferer_image, cfg).data[:, 0]
    ratio = lambda x: np.abs(x) / (np.abs(x) + np.abs(Y[:, 0] - x))
    g_t = steering_gain(at_i - truth.trajectories[0, 0], np.radians(5), np.radians(30))
    # full interferer gain leaves no weight for the neutral value
    np.testing.assert_allclose(m, np.clip(g_t * ratio(S) + ratio(I), 0, 1), atol=1e-12)


def test_oracle_unsteered_ignores_cue(short_scene, geom, cfg):
    Y = stft(short_scene.mixture, cfg).data
    masks = []
    for theta in (0.0, 2.0):
        ctx = new_context(SsfParams(steered=False), geom, cfg, short_scene)
        masks.append(mask_mimo(Y[:, 3], theta, ctx)[0])
    np.testing.assert_array_equal(masks[0], masks[1])


def test_degrade_one_is_all_ones(short_scene, geom, cfg):
    ctx = new_context(SsfParams(oracle_degrade=1.0), geom, cfg, short_scene)
    Y = stft(short_scene.mixture, cfg).data
    m, _ = mask_mimo(Y[:, 0], 0.3, ctx)
    np.testing.assert_array_equal(m, 1.0)


def test_steering_gain_shape():
    p, s = np.radians(5), np.radians(30)
    assert steering_gain(0.0, p, s) == 1.0
    assert steering_gain(np.radians(4.9), p, s) == 1.0
    assert steering_gain(np.radians(17.5), p, s) == pytest.approx(0.5)
    assert steering_gain(np.radians(31), p, s) == 0.0
    assert steering_gain(2 * np.pi + 0.01, p, s) == 1.0


def test_coherence_aligned_is_one(geom, cfg, rng):
    ctx = new_context(SsfParams(kind="coherence", mode="miso"), geom, cfg)
    s = rng.standard_normal(cfg.bins) + 1j * rng.standard_normal(cfg.bins)
    m, _ = mask_miso(plane_wave_frame(geom, 0.8, cfg, s), 0.8, ctx)
    k0, k1 = cfg.band_bins(200, 2000)
    np.testing.assert_allclose(m[k0:k1], 1.0, atol=1e-12)
    assert np.all(m[:k0] == OUT_OF_BAND) and np.all(m[k1:] == OUT_OF_BAND)


def test_coherence_opposite_direction_low(geom, cfg):
    ctx = new_context(SsfParams(kind="coherence", mode="miso"), geom, cfg)
    theta = 0.3
    m, _ = mask_miso(plane_wave_frame(geom, theta + np.pi, cfg), theta, ctx)
    k = 32  # 1 kHz
    assert m[k] < 0.3


def _two_wave_gains(geom, cfg, draws=100, frames=12):
    """Median-able SI-SDR gains of the coherence mask on two equal-power plane waves."""
    gains = []
    k0, k1 = cfg.band_bins(200, 2000)
    stack = lambda z: np.concatenate([z.real, z.imag])
    for draw in range(draws):
        rng = np.random.default_rng(draw)
        ta = rng.uniform(-np.pi, np.pi)
        tb = ta + np.radians(rng.uniform(60, 180)) * rng.choice([-1, 1])
        sa = rng.standard_normal((frames, cfg.bins)) + 1j * rng.standard_normal((frames, cfg.bins))
        sb = rng.standard_normal((frames, cfg.bins)) + 1j * rng.standard_normal((frames, cfg.bins))
        ctx = new_context(SsfParams(kind="coherence"), geom, cfg)
        tgt, mix, out = [], [], []
        for t in range(frames):
            a = plane_wave_frame(geom, ta, cfg, sa[t])
            y = a + plane_wave_frame(geom, tb, cfg, sb[t])
            m, ctx = mask_mimo(y, ta, ctx)
            tgt.append(a[0, k0:k1])
            mix.append(y[0, k0:k1])
            out.append(apply_mask(y, m)[0, k0:k1])
        tgt, mix, out = (stack(np.concatenate(v)) for v in (tgt, mix, out))
        gains.append(si_sdr(out, tgt) - si_sdr(mix, tgt))
    return np.array(gains)


def test_coherence_two_waves_improves_sisdr(geom, cfg):
    gains = _two_wave_gains(geom, cfg)
    assert np.median(gains) > 0.3
    assert np.mean(gains > 0) > 0.9


@pytest.mark.xfail(strict=True, reason="a 10 cm three-mic array barely resolves 60-180 deg below 1 kHz; "
                                       "the coherence mask reaches about 0.5-1.5 dB, not 3 dB")
def test_coherence_two_waves_three_db(geom, cfg):
    assert np.median(_two_wave_gains(geom, cfg)) > 3.0


def test_coherence_smoothing_state(geom, cfg, rng):
    ctx = new_context(SsfParams(kind="coherence", smoothing=0.5), geom, cfg)
    aligned = plane_wave_frame(geom, 0.0, cfg)
    m1, ctx = mask_mimo(aligned, 0.0, ctx)
    m2, ctx = mask_mimo(plane_wave_frame(geom, np.pi, cfg), 0.0, ctx)
    k = 32
    assert m1[0, k] == pytest.approx(1.0)
    assert m2[0, k] < m1[0, k]
    assert m2[0, k] > mask_miso(plane_wave_frame(geom, np.pi, cfg), 0.0,
                                new_context(SsfParams(kind="coherence"), geom, cfg))[0][k]
    ctx.reset()
    assert ctx.smoothed is None and ctx.cursor == 0


def test_apply_mask_properties(rng):
    Y = rng.standard_normal((3, 257)) + 1j * rng.standard_normal((3, 257))
    np.testing.assert_array_equal(apply_mask(Y, np.ones((3, 257))), Y)
    assert not np.any(apply_mask(Y, np.zeros((3, 257))))
    M = (rng.random((3, 257)) > 0.5).astype(float)
    once = apply_mask(Y, M)
    np.testing.assert_array_equal(apply_mask(once, M), once)
    np.testing.assert_array_equal(apply_mask(Y, np.ones(257), 1), Y[1])
    with pytest.raises(ValueError):
        apply_mask(Y, np.ones((2, 257)))
    with pytest.raises(ValueError):
        apply_mask(Y, np.ones(100))


def test_params_validation():
    with pytest.raises(ValueError):
        SsfParams(kind="dnn")
    with pytest.raises(ValueError):
        SsfParams(oracle_degrade=1.5)
    with pytest.raises(ValueError):
        SsfParams(smoothing=1.0)


def test_masks_in_unit_interval(short_scene, geom, cfg):
    Y = stft(short_scene.mixture, cfg).data
    for kind in ("oracle", "coherence"):
        ctx = new_context(SsfParams(kind=kind), geom, cfg, short_scene)
        for t in range(Y.shape[1]):
            m, ctx = mask_mimo(Y[:, t], short_scene.trajectories[0, t], ctx)
            assert m.shape == (3, 257)
            assert np.all((m >= 0) & (m <= 1))
    # reconstruction of a masked spectrogram keeps the signal length
    out = istft(Spectrogram(Y * 0.5, cfg))
    assert out.shape == short_scene.mixture.shape


def test_mimo_preserves_interchannel_phase(short_scene, geom, cfg):
    Y = stft(short_scene.mixture, cfg).data
    ctx = new_context(SsfParams(), geom, cfg, short_scene)
    for t in range(Y.shape[1]):
        m, ctx = mask_mimo(Y[:, t], short_scene.trajectories[0, t], ctx)
        out = apply_mask(Y[:, t], m)
        sel = np.all(m > 0.5, axis=0) & np.all(np.abs(out) > 0, axis=0)
        # a real nonnegative mask cannot rotate the phase of what it passes
        d_out = np.angle(out[1:, sel] * np.conj(out[0, sel]))
        d_mix = np.angle(Y[1:, t, sel] * np.conj(Y[0, t, sel]))
        assert np.all(np.abs(np.angle(np.exp(1j * (d_out - d_mix)))) < 1e-6)


def test_mimo_phase_equals_target_on_clean_scene(clean_truth, geom, cfg):
    Y = stft(clean_truth.mixture, cfg).data
    S = stft(clean_truth.target_direct, cfg).data
    ctx = new_context(SsfParams(), geom, cfg, clean_truth)
    for t in range(Y.shape[1]):
        m, ctx = mask_mimo(Y[:, t], clean_truth.trajectories[0, t], ctx)
        out = apply_mask(Y[:, t], m)
        sel = np.all(m > 0.5, axis=0) & np.all(np.abs(S[:, t]) > 1e-12, axis=0)
        d_out = np.angle(out[1:, sel] * np.conj(out[0, sel]))
        d_s = np.angle(S[1:, t, sel] * np.conj(S[0, t, sel]))
        assert np.all(np.abs(np.angle(np.exp(1j * (d_out - d_s)))) < 1e-6)


def test_coherence_monotone_in_sharpness(short_scene, geom, cfg):
    Y = stft(short_scene.mixture, cfg).data
    prev = None
    for beta in (0.5, 1.0, 2.0, 4.0, 8.0):
        ctx = new_context(SsfParams(kind="coherence", sharpness=beta), geom, cfg)
        ms = np.stack([mask_mimo(Y[:, t], 0.4, ctx)[0] for t in range(Y.shape[1])])
        if prev is not None:
            assert np.all(ms <= prev)
        prev = ms


def test_miso_equals_mimo_reference_row(short_scene, geom, cfg):
    Y = stft(short_scene.mixture, cfg).data
    for kind in ("oracle", "coherence"):
        c1 = new_context(SsfParams(kind=kind, mode="miso"), geom, cfg, short_scene)
        c2 = new_context(SsfParams(kind=kind, mode="mimo"), geom, cfg, short_scene)
        for t in range(Y.shape[1]):
            theta = short_scene.trajectories[0, t] + 0.05
            a, c1 = mask_miso(Y[:, t], theta, c1)
            b, c2 = mask_mimo(Y[:, t], theta, c2)
            np.testing.assert_array_equal(a, b[geom.reference_index])
