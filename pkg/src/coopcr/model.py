"""Configuration and result types shared by the analytics, simulator and CLI.

Channel gains are kept in linear scale; decibels only appear when reading
or writing config files.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional


class Sensing(str, enum.Enum):
    IS = "IS"  # individual sensing
    CS = "CS"  # cooperative sensing, majority-rule fusion


class Protocol(str, enum.Enum):
    ARC = "ARC"
    RBRC = "RBRC"
    NRBRC = "NRBRC"
    NC = "NC"


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    if x <= 0:
        raise ValueError(f"cannot express non-positive gain {x!r} in dB")
    return 10.0 * math.log10(x)


def _check_prob(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")


def _check_positive(name: str, value: float) -> None:
    if not (value > 0.0 and math.isfinite(value)):
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class ChannelProfile:
    """Average power gains (linear) of the six link classes.

    PD: PU source -> PU destination, PR: PU source -> SU destination,
    PS: PU source -> SU source, SR: SU source -> SU destination,
    SD: SU source -> PU destination, SS: SU source -> other SU source.
    """

    sigma_PD2: float
    sigma_PR2: float
    sigma_PS2: float
    sigma_SR2: float
    sigma_SD2: float
    sigma_SS2: float

    def __post_init__(self):
        for f in fields(self):
            _check_positive(f.name, getattr(self, f.name))


@dataclass(frozen=True)
class SystemConfig:
    L: int
    P_P: float
    P_S: float
    sigma_N2: float
    channels: ChannelProfile
    beta: float
    p_d: float
    p_f: float
    q: float
    lambda_P: float
    sensing: Sensing = Sensing.IS
    protocol: Protocol = Protocol.ARC
    # Fused detection / false-alarm probabilities for cooperative sensing.
    # None means majority-rule fusion of p_d, p_f over the L users.
    p_d_star: Optional[float] = None
    p_f_star: Optional[float] = None

    def __post_init__(self):
        if isinstance(self.L, bool) or not isinstance(self.L, int) or self.L < 1:
            raise ValueError(f"L must be an integer >= 1, got {self.L!r}")
        for name in ("P_P", "P_S", "sigma_N2", "beta"):
            _check_positive(name, getattr(self, name))
        for name in ("p_d", "p_f", "q", "lambda_P"):
            _check_prob(name, getattr(self, name))
        for name in ("p_d_star", "p_f_star"):
            value = getattr(self, name)
            if value is not None:
                _check_prob(name, value)
        object.__setattr__(self, "sensing", Sensing(self.sensing))
        object.__setattr__(self, "protocol", Protocol(self.protocol))

    def replace(self, **changes) -> "SystemConfig":
        chan = {k: changes.pop(k) for k in list(changes) if k in _CHANNEL_FIELDS}
        channels = replace(self.channels, **chan) if chan else self.channels
        return replace(self, channels=channels, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sensing"] = self.sensing.value
        d["protocol"] = self.protocol.value
        return d


_CHANNEL_FIELDS = tuple(f.name for f in fields(ChannelProfile))


@dataclass(frozen=True)
class ThroughputReport:
    mu_P: float
    mu_S_bound: float
    stable: bool
    D_P: Optional[float] = None
    q_star: Optional[float] = None
    notes: tuple = field(default=())

    def __post_init__(self):
        if self.stable and self.D_P is not None and self.D_P < 1.0 - 1e-12:
            raise ValueError("delay below one slot")

    def to_dict(self) -> dict:
        d = {"mu_P": self.mu_P, "mu_S_bound": self.mu_S_bound, "stable": self.stable}
        if self.D_P is not None:
            d["D_P"] = self.D_P
        if self.q_star is not None:
            d["q_star"] = self.q_star
        if self.notes:
            d["notes"] = list(self.notes)
        return d


SIGMA_SS2_DEFAULT_DB = -10.0


def default_config(**overrides) -> SystemConfig:
    """Baseline numerical setup: P_P = P_S = sigma_N^2 = 0.1 W, beta = 0.1,
    p_d = 0.8, p_f = 0.1.

    L, q and lambda_P are not fixed by the baseline; they default to 4, 0.7
    and 0.1. Any field (including channel gains, linear) can be overridden.
    """
    channels = ChannelProfile(
        sigma_PD2=db_to_linear(-13.0),
        sigma_PR2=db_to_linear(0.0),
        sigma_PS2=db_to_linear(-10.0),
        sigma_SR2=db_to_linear(-10.0),
        sigma_SD2=db_to_linear(-10.0),
        sigma_SS2=db_to_linear(SIGMA_SS2_DEFAULT_DB),
    )
    cfg = SystemConfig(
        L=4,
        P_P=0.1,
        P_S=0.1,
        sigma_N2=0.1,
        channels=channels,
        beta=0.1,
        p_d=0.8,
        p_f=0.1,
        q=0.7,
        lambda_P=0.1,
    )
    return cfg.replace(**overrides) if overrides else cfg
