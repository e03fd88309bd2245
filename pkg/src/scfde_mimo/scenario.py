"""System parameters and energy accounting.

Bit energy per transmit antenna at each receive antenna is
``Eb = sigma_s**2 * P_sigma / (2 * eta * m)`` with ``eta = N / (N + Ls)``;
the detector regularisation is ``alpha_j = N0 / sigma_s_j**2``.
"""
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import PowerDelayProfile
from .modem import QamScheme

__all__ = [
    "AntennaConfig",
    "ScenarioConfig",
    "uniform_scenario",
    "NoiseConfig",
    "derive_noise",
    "ebn0_from_noise",
    "load_scenario",
    "scenario_from_dict",
    "POWER_CONTROL_MODES",
]

POWER_CONTROL_MODES = ("equal_eb", "fixed_sigma")


@dataclass(frozen=True)
class AntennaConfig:
    scheme: QamScheme
    sigma2: float

    def __post_init__(self):
        if not (self.sigma2 > 0 and np.isfinite(self.sigma2)):
            raise ValueError(f"symbol power must be positive, got {self.sigma2}")

    @property
    def amplitude(self):
        """Scale applied to the unit-spaced lattice to reach ``sigma2``."""
        return float(np.sqrt(self.sigma2 / self.scheme.power))


@dataclass(frozen=True)
class ScenarioConfig:
    """One uplink configuration.

    ``power_control`` decides how a scalar Eb/N0 is shared between inputs:

    ``equal_eb``
        Every input gets the requested Eb/N0. Symbol powers are rescaled so
        ``sigma2/m`` is common to all inputs (first antenna keeps its power).
    ``fixed_sigma``
        Symbol powers are used as configured; the scalar Eb/N0 refers to the
        average bit energy (total symbol energy over total bits), and each
        input ends up with its own Eb/N0.

    Both coincide when every antenna uses the same constellation and power.
    """

    block_len: int
    cp_len: int
    n_rx: int
    antennas: tuple
    profile: PowerDelayProfile
    power_control: str = "equal_eb"
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "antennas", tuple(self.antennas))
        if self.block_len < 1:
            raise ValueError("block length must be positive")
        if not 0 <= self.cp_len < self.block_len:
            raise ValueError("cyclic prefix must satisfy 0 <= Ls < N")
        if not self.antennas:
            raise ValueError("need at least one transmit antenna")
        if self.n_tx > self.n_rx:
            raise ValueError(f"N_T={self.n_tx} exceeds N_R={self.n_rx}")
        if self.profile.length > self.cp_len + 1:
            raise ValueError(
                f"profile has {self.profile.length} taps, cyclic prefix only covers {self.cp_len + 1}"
            )
        if self.power_control not in POWER_CONTROL_MODES:
            raise ValueError(f"power_control must be one of {POWER_CONTROL_MODES}")

    @property
    def n_tx(self):
        return len(self.antennas)

    @property
    def eta(self):
        return self.block_len / (self.block_len + self.cp_len)

    @property
    def schemes(self):
        return tuple(a.scheme for a in self.antennas)

    @property
    def m(self):
        return np.array([a.scheme.m for a in self.antennas], dtype=float)

    @property
    def bits_per_block(self):
        return int(2 * self.m.sum() * self.block_len)

    @property
    def p_sigma(self):
        return self.profile.p_sigma

    def symbol_powers(self):
        """Effective ``sigma_s**2`` per input after power control."""
        sigma2 = np.array([a.sigma2 for a in self.antennas], dtype=float)
        if self.power_control == "equal_eb":
            per_bit = sigma2[0] / self.m[0]
            return per_bit * self.m
        return sigma2

    def amplitudes(self):
        """Lattice scale per input so that its mean power is ``symbol_powers()``."""
        lattice = np.array([a.scheme.power for a in self.antennas])
        return np.sqrt(self.symbol_powers() / lattice)

    def with_rx(self, n_rx):
        return replace(self, n_rx=int(n_rx))

    def to_dict(self):
        return {
            "name": self.name,
            "N": self.block_len,
            "Ls": self.cp_len,
            "NT": self.n_tx,
            "NR": self.n_rx,
            "per_antenna": [{"qam": a.scheme.order, "sigma2": a.sigma2} for a in self.antennas],
            "profile": self.profile.to_json(),
            "power_control": self.power_control,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class NoiseConfig:
    """Noise level for one operating point.

    ``n0`` is the one-sided noise PSD shared by every receive antenna; the
    per-subchannel noise variance is ``n0 * N``.
    """

    n0: float
    alpha: np.ndarray
    ebn0_db: np.ndarray
    block_len: int = field(default=1)

    @property
    def sigma_n2(self):
        return self.n0 * self.block_len

    @property
    def noiseless(self):
        return self.n0 == 0.0


def _ebn0_linear(ebn0_db):
    ebn0_db = np.asarray(ebn0_db, dtype=float)
    lin = np.where(np.isposinf(ebn0_db), np.inf, 10.0 ** (ebn0_db / 10.0))
    if np.any(~(lin > 0)):
        raise ValueError(f"Eb/N0 must have a positive linear value, got {ebn0_db}")
    return lin


def derive_noise(cfg, ebn0_db, p_sigma=None):
    """Turn an Eb/N0 operating point into ``N0`` and per-input ``alpha``.

    Parameters
    ----------
    cfg : ScenarioConfig
    ebn0_db : float or sequence of float
        A scalar is distributed according to ``cfg.power_control``. A
        per-input list must describe a single physical noise level, i.e.
        ``sigma_j**2 * P / (2 eta m_j EbN0_j)`` equal across inputs.
        ``+inf`` gives the noiseless (IBER) limit.
    p_sigma : float, optional
        Overrides the profile's total power.
    """
    p = cfg.p_sigma if p_sigma is None else float(p_sigma)
    sigma2 = cfg.symbol_powers()
    m = cfg.m
    eta = cfg.eta
    ebn0_db = np.asarray(ebn0_db, dtype=float)
    if ebn0_db.ndim == 0:
        lin = _ebn0_linear(ebn0_db)
        if cfg.power_control == "fixed_sigma":
            eb_avg = sigma2.sum() * p / (2.0 * eta * m.sum())
            n0 = 0.0 if np.isinf(lin) else float(eb_avg / lin)
        else:
            n0 = 0.0 if np.isinf(lin) else float(sigma2[0] * p / (2.0 * eta * m[0] * lin))
    else:
        if ebn0_db.shape != (cfg.n_tx,):
            raise ValueError(f"expected {cfg.n_tx} Eb/N0 values, got {ebn0_db.shape}")
        lin = _ebn0_linear(ebn0_db)
        if np.all(np.isinf(lin)):
            n0 = 0.0
        else:
            n0s = sigma2 * p / (2.0 * eta * m * lin)
            n0 = float(n0s[0])
            if not np.allclose(n0s, n0, rtol=1e-9, atol=0):
                raise ValueError(
                    "per-input Eb/N0 values imply different receiver noise levels; "
                    "adjust sigma2 or power_control"
                )
    alpha = n0 / sigma2
    return NoiseConfig(n0, alpha, ebn0_from_noise(cfg, n0, p), cfg.block_len)


def ebn0_from_noise(cfg, n0, p_sigma=None):
    """Per-input Eb/N0 in dB implied by a noise level ``n0``."""
    p = cfg.p_sigma if p_sigma is None else float(p_sigma)
    eb = cfg.symbol_powers() * p / (2.0 * cfg.eta * cfg.m)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(eb / n0) if n0 > 0 else np.full(cfg.n_tx, np.inf)


def _profile_from_json(value):
    if value is None or value == "linear64":
        return PowerDelayProfile.linear_decay(64)
    if value == "flat":
        return PowerDelayProfile.flat()
    if isinstance(value, dict):
        kind = value.get("kind")
        if kind == "linear_decay":
            return PowerDelayProfile.linear_decay(int(value.get("taps", 64)))
        if kind == "flat":
            return PowerDelayProfile.flat(float(value.get("power", 1.0)))
        raise ValueError(f"unknown profile kind {kind!r}")
    if isinstance(value, list):
        return PowerDelayProfile(tuple(value))
    raise ValueError(f"cannot interpret profile {value!r}")


def scenario_from_dict(d):
    """Build a :class:`ScenarioConfig` from the JSON schema in the README.

    ``per_antenna`` entries may carry a ``count`` to repeat them; if a
    single entry without ``count`` is given with ``NT``, it is broadcast.
    """
    required = ("N", "Ls", "NR", "per_antenna")
    missing = [k for k in required if k not in d]
    if missing:
        raise KeyError(missing[0])
    antennas = []
    for entry in d["per_antenna"]:
        scheme = QamScheme.from_order(entry["qam"])
        sigma2 = float(entry.get("sigma2", scheme.power))
        antennas += [AntennaConfig(scheme, sigma2)] * int(entry.get("count", 1))
    nt = d.get("NT")
    if nt is not None:
        nt = int(nt)
        if len(d["per_antenna"]) == 1 and "count" not in d["per_antenna"][0]:
            antennas = antennas * nt
        if len(antennas) != nt:
            raise ValueError(f"NT={nt} but per_antenna describes {len(antennas)} antennas")
    return ScenarioConfig(
        block_len=int(d["N"]),
        cp_len=int(d["Ls"]),
        n_rx=int(d["NR"]),
        antennas=tuple(antennas),
        profile=_profile_from_json(d.get("profile", "linear64")),
        power_control=d.get("power_control", "equal_eb"),
        seed=int(d.get("seed", 0)),
        name=str(d.get("name", "")),
    )


def load_scenario(path):
    path = Path(path)
    return scenario_from_dict(json.loads(path.read_text()))


def uniform_scenario(n_tx, n_rx, qam=4, block_len=256, cp_len=64, profile=None, seed=0):
    """Convenience constructor: same constellation at unscaled power everywhere."""
    scheme = QamScheme.from_order(qam)
    return ScenarioConfig(
        block_len=block_len,
        cp_len=cp_len,
        n_rx=n_rx,
        antennas=(AntennaConfig(scheme, scheme.power),) * n_tx,
        profile=profile or PowerDelayProfile.linear_decay(64),
        seed=seed,
    )
