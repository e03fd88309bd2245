import numpy as np
import pytest

from scfde_mimo.channel import PowerDelayProfile
from scfde_mimo.modem import QamScheme
from scfde_mimo.scenario import (
    AntennaConfig,
    ScenarioConfig,
    derive_noise,
    ebn0_from_noise,
    load_scenario,
    scenario_from_dict,
    uniform_scenario,
)


def _single(qam, sigma2, p=1.0):
    scheme = QamScheme.from_order(qam)
    return ScenarioConfig(256, 64, 1, (AntennaConfig(scheme, sigma2),), PowerDelayProfile.flat(p))


def test_eta_default_parameters():
    assert uniform_scenario(12, 60).eta == 0.8


def test_derive_noise_qpsk():
    # 2 * 1 / (2 * 0.8 * 1 * 1)
    noise = derive_noise(_single(4, 2.0), 0.0)
    assert noise.n0 == pytest.approx(1.25, rel=1e-15)
    assert noise.alpha[0] == pytest.approx(0.625, rel=1e-15)
    assert noise.sigma_n2 == pytest.approx(1.25 * 256)


def test_derive_noise_64qam():
    # 42 / (2 * 0.8 * 3 * 10)
    noise = derive_noise(_single(64, 42.0), 10.0)
    assert noise.n0 == pytest.approx(0.875, rel=1e-14)


def test_derive_noise_infinite_is_noiseless():
    noise = derive_noise(_single(4, 2.0), np.inf)
    assert noise.n0 == 0.0 and noise.noiseless
    np.testing.assert_array_equal(noise.alpha, [0.0])


def test_alpha_matches_closed_form():
    cfg = uniform_scenario(4, 8, qam=16)
    for x in (-5.0, 3.0, 12.5):
        noise = derive_noise(cfg, x)
        expected = cfg.p_sigma / (2 * cfg.eta * 2 * 10 ** (x / 10))
        np.testing.assert_allclose(noise.alpha, expected, rtol=1e-13)


@pytest.mark.parametrize("x", [-15.0, 0.0, 7.3, 30.0])
def test_round_trip(x):
    cfg = uniform_scenario(3, 6, qam=64)
    noise = derive_noise(cfg, x)
    np.testing.assert_allclose(ebn0_from_noise(cfg, noise.n0), x, rtol=1e-12)
    np.testing.assert_allclose(noise.ebn0_db, x, rtol=1e-12)


def test_rejects_non_positive_linear():
    with pytest.raises(ValueError):
        derive_noise(_single(4, 2.0), -np.inf)


def _mixed(power_control):
    d = {
        "N": 256, "Ls": 64, "NR": 8,
        "per_antenna": [{"qam": 64, "count": 1}, {"qam": 16, "count": 1}, {"qam": 4, "count": 2}],
        "power_control": power_control,
    }
    return scenario_from_dict(d)


def test_equal_eb_rescales_powers():
    cfg = _mixed("equal_eb")
    np.testing.assert_allclose(cfg.symbol_powers(), [42, 28, 14, 14])
    noise = derive_noise(cfg, 4.0)
    np.testing.assert_allclose(noise.ebn0_db, 4.0, rtol=1e-12)


def test_fixed_sigma_uses_average_bit_energy():
    cfg = _mixed("fixed_sigma")
    np.testing.assert_allclose(cfg.symbol_powers(), [42, 10, 2, 2])
    noise = derive_noise(cfg, 4.0)
    eb = np.array([42, 10, 2, 2]) * cfg.p_sigma / (2 * 0.8 * np.array([3, 2, 1, 1]))
    eb_avg = 56 * cfg.p_sigma / (2 * 0.8 * 7)
    np.testing.assert_allclose(noise.ebn0_db, 10 * np.log10(eb / eb_avg) + 4.0, rtol=1e-12)


def test_per_input_list_must_be_consistent():
    cfg = _mixed("fixed_sigma")
    noise = derive_noise(cfg, 4.0)
    again = derive_noise(cfg, noise.ebn0_db)
    assert again.n0 == pytest.approx(noise.n0, rel=1e-12)
    with pytest.raises(ValueError, match="noise levels"):
        derive_noise(cfg, [4.0, 4.0, 4.0, 4.0])


def test_invariants_enforced():
    s = AntennaConfig(QamScheme(1), 2.0)
    prof = PowerDelayProfile.linear_decay(64)
    with pytest.raises(ValueError):
        ScenarioConfig(256, 64, 2, (s,) * 3, prof)  # NT > NR
    with pytest.raises(ValueError):
        ScenarioConfig(64, 64, 4, (s,), prof)  # Ls >= N
    with pytest.raises(ValueError):
        ScenarioConfig(256, 32, 4, (s,), prof)  # profile longer than CP
    with pytest.raises(ValueError):
        AntennaConfig(QamScheme(1), 0.0)


def test_scenario_json_round_trip(tmp_path):
    cfg = _mixed("equal_eb")
    path = tmp_path / "s.json"
    import json

    path.write_text(json.dumps(cfg.to_dict()))
    again = load_scenario(path)
    assert again.to_dict() == cfg.to_dict()
    assert again.p_sigma == pytest.approx(32.0)


def test_broadcast_single_entry():
    cfg = scenario_from_dict({"N": 256, "Ls": 64, "NT": 12, "NR": 60, "per_antenna": [{"qam": 16}]})
    assert cfg.n_tx == 12
    assert all(a.sigma2 == 10.0 for a in cfg.antennas)


def test_nt_mismatch_rejected():
    with pytest.raises(ValueError):
        scenario_from_dict({"N": 256, "Ls": 64, "NT": 5, "NR": 60, "per_antenna": [{"qam": 4, "count": 4}]})
