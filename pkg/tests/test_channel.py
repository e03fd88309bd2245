import numpy as np
import pytest

from scfde_mimo.channel import (
    ChannelRealization,
    PowerDelayProfile,
    draw_rayleigh,
    load_realizations,
    los_single_path,
    save_realizations,
    substream,
)


def test_linear64_profile_total_power():
    prof = PowerDelayProfile.linear_decay(64)
    assert prof.length == 64
    assert prof.p_sigma == pytest.approx(32.0, rel=1e-14)
    assert prof.taps[0] == 1.0 and prof.taps[-1] == 0.0


def test_profile_validation():
    with pytest.raises(ValueError):
        PowerDelayProfile((1.0, -0.1))
    with pytest.raises(ValueError):
        PowerDelayProfile((0.0, 0.0))


def test_flat_profile_gives_flat_response():
    real = draw_rayleigh(PowerDelayProfile.flat(), 2, 3, 64, substream(0, 1))
    mag = np.abs(real.H)
    np.testing.assert_allclose(mag, np.broadcast_to(mag[0], mag.shape), rtol=1e-12)


def test_cfr_is_dft_of_cir():
    real = draw_rayleigh(PowerDelayProfile.linear_decay(64), 2, 3, 256, substream(1, 1))
    padded = np.zeros((3, 2, 256), complex)
    padded[..., :64] = real.cir
    np.testing.assert_allclose(np.moveaxis(real.H, 0, -1), np.fft.fft(padded, axis=-1), atol=1e-12)


def test_support_limited_to_profile():
    real = draw_rayleigh(PowerDelayProfile.linear_decay(64), 2, 2, 256, substream(2, 1))
    assert real.cir.shape[-1] == 64
    # zero-variance last tap stays exactly zero
    assert np.all(real.cir[..., 63] == 0)
    t = np.fft.ifft(np.moveaxis(real.H, 0, -1), axis=-1)
    assert np.max(np.abs(t[..., 64:])) < 1e-12


def test_mean_power_per_subchannel():
    # E|H_k|^2 = P_sigma for every k, checked at 3 standard errors
    prof = PowerDelayProfile.linear_decay(64)
    rng = substream(3, 1)
    n = 10_000
    samples = np.stack([np.abs(draw_rayleigh(prof, 1, 1, 256, rng).H[:, 0, 0]) ** 2 for _ in range(n)])
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(mean - 32.0) < 3.5 * se)
    # the per-k checks are 256 correlated tests; the pooled one is tight
    assert abs(mean.mean() - 32.0) < 3 * samples.mean(axis=1).std(ddof=1) / np.sqrt(n)


def test_tap_variances():
    prof = PowerDelayProfile((1.0, 0.5, 0.25))
    rng = substream(4, 1)
    cir = np.stack([draw_rayleigh(prof, 1, 1, 8, rng).cir[0, 0] for _ in range(20000)])
    p = np.mean(np.abs(cir) ** 2, axis=0)
    se = np.std(np.abs(cir) ** 2, axis=0, ddof=1) / np.sqrt(len(cir))
    assert np.all(np.abs(p - prof.taps) < 3 * se)
    # circular symmetry: real and imaginary parts share the variance
    assert abs(np.mean(cir.real**2) - np.mean(cir.imag**2)) < 0.02


def test_determinism():
    prof = PowerDelayProfile.linear_decay(64)
    a = draw_rayleigh(prof, 3, 5, 256, substream(9, 1, 17))
    b = draw_rayleigh(prof, 3, 5, 256, substream(9, 1, 17))
    c = draw_rayleigh(prof, 3, 5, 256, substream(9, 1, 18))
    np.testing.assert_array_equal(a.H, b.H)
    assert not np.array_equal(a.cir, c.cir)


def test_los_channel():
    real = los_single_path(4, 1.0, block_len=64)
    assert real.n_tx == 1 and real.n_rx == 4
    np.testing.assert_allclose(np.abs(real.H) ** 2, 1.0, rtol=1e-14)
    real = los_single_path(3, 32.0)
    np.testing.assert_allclose(np.abs(real.H) ** 2, 32.0, rtol=1e-13)


def test_gram():
    real = draw_rayleigh(PowerDelayProfile.flat(), 3, 5, 16, substream(5, 1))
    H = real.H
    np.testing.assert_allclose(real.gram, np.conj(np.swapaxes(H, 1, 2)) @ H)


def test_column_view():
    real = draw_rayleigh(PowerDelayProfile.linear_decay(8), 3, 4, 32, substream(6, 1))
    col = real.column(2)
    np.testing.assert_allclose(col.H[:, :, 0], real.H[:, :, 2], atol=1e-13)


def test_dump_round_trip(tmp_path):
    prof = PowerDelayProfile.linear_decay(16)
    reals = [draw_rayleigh(prof, 2, 3, 64, substream(7, 1, r)) for r in range(3)]
    path = tmp_path / "ens.npz"
    save_realizations(path, reals)
    back = load_realizations(path)
    assert len(back) == 3
    for a, b in zip(reals, back):
        np.testing.assert_array_equal(a.H, b.H)
        assert b.p_sigma == a.p_sigma


def test_cir_longer_than_block_rejected():
    with pytest.raises(ValueError):
        ChannelRealization(np.zeros((1, 1, 10), complex), 8, 1.0)
