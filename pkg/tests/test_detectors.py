import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scfde_mimo.channel import PowerDelayProfile, draw_rayleigh, los_single_path, substream
from scfde_mimo.detectors import (
    DegenerateGainError,
    DetectorKind,
    DfSchedule,
    build_B,
    build_detection_set,
    hard_decisions,
    iterative_df_detect,
    linear_detect,
    time_domain_outputs,
)
from scfde_mimo.modem import QamScheme
from scfde_mimo.numerics import dft, hermitian_transpose, idft

KINDS = list(DetectorKind)
QPSK = QamScheme(1)


def _real(nt, nr, seed=0, taps=16, n=64):
    return draw_rayleigh(PowerDelayProfile.linear_decay(taps), nt, nr, n, substream(seed, 1))


def _random_block(real, rng, scheme=QPSK):
    pts = scheme.constellation()
    s = pts[rng.integers(0, scheme.order, (real.n_tx, real.block_len))]
    return s


def test_parse_aliases():
    assert DetectorKind.parse("mmse") is DetectorKind.EXACT_MMSE
    assert DetectorKind.parse("SimplifiedMMSE") is DetectorKind.SIMPLIFIED_MMSE
    assert DetectorKind.parse("mf") is DetectorKind.MF
    with pytest.raises(ValueError):
        DetectorKind.parse("zf-sic")


def test_mf_b_is_identity():
    real = _real(3, 5)
    B = build_B("MF", real.gram, 0.5)
    np.testing.assert_array_equal(B, np.broadcast_to(np.eye(3), B.shape))


def test_simplified_exact_for_diagonal_a():
    a = np.stack([np.diag([2.0, 5.0, 0.5]).astype(complex)] * 4)
    np.testing.assert_allclose(build_B("SimplifiedMMSE", a, 0.0), build_B("ExactMMSE", a, 0.0), atol=1e-15)


def test_simplified_neumann_error_bound():
    # |B_s - A^-1| <= |D^-1| |E|^2 / (1 - |E|) with E = D^-1 (A - D)
    rng = np.random.default_rng(1)
    for _ in range(20):
        h = rng.standard_normal((40, 4)) + 1j * rng.standard_normal((40, 4))
        a = hermitian_transpose(h) @ h
        d = np.diag(np.diag(a).real)
        e = np.linalg.inv(d) @ (a - d)
        ne = np.linalg.norm(e, 2)
        assert ne < 1
        err = np.linalg.norm(build_B("smmse", a[None], 0.0)[0] - np.linalg.inv(a), 2)
        assert err <= np.linalg.norm(np.linalg.inv(d), 2) * ne**2 / (1 - ne) * (1 + 1e-9)


@pytest.mark.parametrize("kind", KINDS)
def test_gamma_is_b_times_gram(kind):
    real = _real(3, 6, seed=2)
    dset = build_detection_set(kind, real, alpha=[0.1, 0.2, 0.3])
    np.testing.assert_allclose(dset.Gamma, dset.B @ real.gram, atol=1e-10)
    np.testing.assert_allclose(dset.Gamma, dset.D @ real.H, atol=1e-10)
    np.testing.assert_allclose(dset.gamma, np.mean(np.diagonal(dset.Gamma, axis1=1, axis2=2), axis=0))


@pytest.mark.parametrize("kind", KINDS)
def test_output_decomposition(kind):
    # linear output == gain * S + ISI + MUI + noise, evaluated term by term
    rng = np.random.default_rng(3)
    real = _real(3, 5, seed=3)
    dset = build_detection_set(kind, real, alpha=0.2)
    s = _random_block(real, rng)
    S = dft(s, axis=-1).T
    noise = rng.standard_normal((64, 5)) + 1j * rng.standard_normal((64, 5))
    Y = np.einsum("kij,kj->ki", real.H, S) + noise
    y = time_domain_outputs(linear_detect(dset, Y))

    G = dset.Gamma
    n = dset.n_tx
    diag = G[:, np.arange(n), np.arange(n)]
    isi = idft(((diag - dset.gamma) * S).T, axis=-1)
    off = G.copy()
    off[:, np.arange(n), np.arange(n)] = 0
    mui = idft(np.einsum("kjl,kl->kj", off, S).T, axis=-1)
    nz = idft(np.einsum("kji,ki->kj", dset.D, noise).T, axis=-1)
    recon = dset.gamma[:, None] * s + isi + mui + nz
    assert np.max(np.abs(y - recon)) <= 1e-10 * np.max(np.abs(y))


def test_mf_gamma_hermitian_psd():
    real = _real(4, 6, seed=4)
    G = build_detection_set("MF", real).Gamma
    np.testing.assert_allclose(G, hermitian_transpose(G), atol=1e-12)
    assert np.all(np.linalg.eigvalsh(G) > -1e-10)


def test_exact_mmse_b_inverts_a():
    real = _real(4, 6, seed=5)
    alpha = np.array([0.1, 0.5, 1.0, 2.0])
    B = build_B("ExactMMSE", real.gram, alpha)
    A = real.gram + np.diag(alpha)
    assert np.max(np.abs(A @ B - np.eye(4))) < 1e-10


def test_negative_alpha_rejected():
    with pytest.raises(ValueError):
        build_B("ExactMMSE", np.eye(2)[None], -1.0)


def test_los_mf_gain():
    real = los_single_path(4, 32.0, block_len=64)
    dset = build_detection_set("MF", real)
    np.testing.assert_allclose(dset.gamma, [4 * 32.0], rtol=1e-12)


def test_noise_gain_matches_detection_matrices():
    real = _real(3, 5, seed=6)
    for kind in KINDS:
        dset = build_detection_set(kind, real, 0.3)
        np.testing.assert_allclose(dset.noise_gain, np.sum(np.abs(dset.D) ** 2, axis=(0, 2)), rtol=1e-10)


@pytest.mark.parametrize("kind", KINDS)
def test_noiseless_los_is_exact(kind):
    rng = np.random.default_rng(7)
    real = los_single_path(3, 1.0, block_len=64)
    dset = build_detection_set(kind, real, 0.0)
    for scheme in (QamScheme(1), QamScheme(2), QamScheme(3)):
        s = _random_block(real, rng, scheme)
        Y = np.einsum("kij,kj->ki", real.H, dft(s, axis=-1).T)
        dec = hard_decisions(time_domain_outputs(linear_detect(dset, Y)), dset.gamma, [scheme])
        np.testing.assert_array_equal(dec, s)


def _noisy(real, s, n0, rng, amp=1.0):
    S = dft(s * amp, axis=-1).T
    Y = np.einsum("kij,kj->ki", real.H, S)
    n = real.block_len
    w = rng.standard_normal(Y.shape) + 1j * rng.standard_normal(Y.shape)
    return Y + np.sqrt(n0 * n / 2) * w


def test_df_single_iteration_equals_linear():
    rng = np.random.default_rng(8)
    real = _real(3, 6, seed=8)
    s = _random_block(real, rng)
    Y = _noisy(real, s, 0.5, rng)
    alpha = np.full(3, 0.25)
    for kind in KINDS:
        dec = iterative_df_detect(DfSchedule.linear(kind), real, alpha, Y, [QPSK] * 3)
        dset = build_detection_set(kind, real, alpha)
        ref = hard_decisions(time_domain_outputs(linear_detect(dset, Y)), dset.gamma, [QPSK] * 3)
        assert dec.shape == (1, 3, 64)
        np.testing.assert_array_equal(dec[0], ref)


def test_df_with_perfect_feedback_cancels_interference():
    # correct decisions fed back leave gamma * s + noise only
    rng = np.random.default_rng(9)
    real = _real(4, 4, seed=9)
    s = _random_block(real, rng)
    Y = _noisy(real, s, 0.0, rng)
    dset = build_detection_set("MF", real)
    S = dft(s, axis=-1).T
    Yt = linear_detect(dset, Y) + dset.gamma * S - np.einsum("kjl,kl->kj", dset.Gamma, S)
    y = time_domain_outputs(Yt)
    np.testing.assert_allclose(y, dset.gamma[:, None] * s, atol=1e-9 * np.abs(dset.gamma).max())


def test_exact_mmse_zf_limit():
    # alpha -> 0 with NT == NR: MMSE becomes zero forcing, Gamma == I
    real = _real(3, 3, seed=10)
    dset = build_detection_set("ExactMMSE", real, 0.0)
    np.testing.assert_allclose(dset.Gamma, np.broadcast_to(np.eye(3), dset.Gamma.shape), atol=1e-8)


def test_df_improves_over_iterations():
    rng = np.random.default_rng(11)
    errors = np.zeros(4)
    sched = DfSchedule("SimplifiedMMSE", "MF", 4)
    for r in range(30):
        real = _real(2, 8, seed=100 + r, taps=64, n=256)
        s = _random_block(real, rng)
        # roughly where MF alone sits near 1e-2
        Y = _noisy(real, s, 20.0, rng)
        dec = iterative_df_detect(sched, real, np.full(2, 10.0), Y, [QPSK] * 2)
        errors += np.array([np.sum(d != s) for d in dec])
    assert errors[-1] <= errors[0]


def test_schedule_validation():
    with pytest.raises(ValueError):
        DfSchedule("SimplifiedMMSE", "ExactMMSE", 3)
    assert DfSchedule("ExactMMSE", "MF", 1).label == "ExactMMSE"
    assert DfSchedule().kind_at(1) is DetectorKind.SIMPLIFIED_MMSE
    assert DfSchedule().kind_at(3) is DetectorKind.MF
    with pytest.raises(ValueError):
        DfSchedule(iterations=0)


def test_zero_gain_raises():
    real = _real(2, 3, seed=12)
    zero = type(real)(np.zeros_like(real.cir), real.block_len, real.p_sigma)
    with pytest.raises(DegenerateGainError):
        iterative_df_detect(DfSchedule.linear("MF"), zero, np.zeros(2), np.zeros((64, 3), complex), [QPSK] * 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(0, 3), st.integers(0, 2**32 - 1), st.floats(1e-3, 10.0))
def test_mmse_gain_bounded(nt, extra, seed, alpha):
    # for the exact MMSE, 0 < gamma <= 1 for every input
    real = draw_rayleigh(PowerDelayProfile.flat(), nt, nt + extra, 8, substream(seed, 1))
    dset = build_detection_set("ExactMMSE", real, alpha)
    g = dset.gamma
    assert np.all(np.abs(g.imag) < 1e-10)
    assert np.all(g.real > 0) and np.all(g.real <= 1 + 1e-12)
