"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np

_TAPS = np.arange(-3, 5)


def das_powers(frame, tau, df, k0, k1):
    frame = np.asarray(frame, dtype=np.complex128)
    tau = np.asarray(tau, dtype=np.float64)
    n_ch = tau.shape[1]
    freqs = df * np.arange(k0, k1)
    # (n_az, ch, k) conjugate steering phases
    phase = np.exp(2j * np.pi * tau[:, :, None] * freqs[None, None, :])
    beam = np.einsum("pmk,mk->pk", phase, frame[:, k0:k1])
    return (beam.real**2 + beam.imag**2).sum(axis=1) / (n_ch * n_ch * (k1 - k0))


def systematic_indices(weights, u):
    weights = np.asarray(weights, dtype=np.float64)
    n = weights.shape[0]
    cdf = np.cumsum(weights)
    pos = (u + np.arange(n)) / n
    return np.minimum(np.searchsorted(cdf, pos, side="right"), n - 1).astype(np.intp)


def fractional_delay(src, delay, gain):
    src = np.asarray(src, dtype=np.float64)
    delay = np.asarray(delay, dtype=np.float64)
    x = np.arange(delay.shape[0]) - delay
    i0 = np.floor(x).astype(np.intp)
    u = (x - i0)[:, None] - _TAPS[None, :]
    h = np.sinc(u) * 0.5 * (1.0 + np.cos(np.pi * u / 4.0))
    h /= h.sum(axis=1, keepdims=True)
    idx = i0[:, None] + _TAPS[None, :]
    valid = (idx >= 0) & (idx < src.shape[0])
    taps = np.where(valid, src[np.clip(idx, 0, src.shape[0] - 1)], 0.0)
    return np.asarray(gain, dtype=np.float64) * (h * taps).sum(axis=1)
