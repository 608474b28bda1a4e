"""Power-splitting factor under the worst-case SNR constraint, and the
harvested-power / SNR expressions it trades off against."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import ChannelSet, NoiseParams
from .traffic import NodeProfile


@dataclass(frozen=True)
class ReliabilityConfig:
    snr_min_linear: float = 20.0
    rho_min: float = 1e-2
    eta: float = 0.5

    def __post_init__(self):
        if self.snr_min_linear <= 0:
            raise ValueError("snr_min_linear must be > 0")
        if not 0 < self.rho_min <= 1:
            raise ValueError("rho_min must lie in (0, 1]")
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must lie in [0, 1]")


@dataclass(frozen=True)
class PsfDecision:
    rho: float
    d0: float
    feasible: bool


@dataclass(frozen=True)
class NonlinearHarvestParams:
    """Logistic rectifier model: saturation ``varphi`` (W), steepness ``psi``
    (1/W), turn-on ``phi`` (W) and symbol time ``T`` (s)."""

    varphi: float
    psi: float
    phi: float
    T: float

    def __post_init__(self):
        if min(self.varphi, self.psi, self.phi, self.T) <= 0:
            raise ValueError("non-linear harvester parameters must be positive")


def snr_mod(d0: float, rho: float, noise: NoiseParams) -> float:
    """Detection SNR of the closest pair: (d0/2)^2 rho / (delta2 + rho sigma2)."""
    num = (0.5 * d0) ** 2 * rho
    den = noise.delta2 + rho * noise.sigma2
    if den == 0:
        return math.inf if num > 0 else 0.0
    return num / den


def psf_from_distance(d0: float, noise: NoiseParams, cfg: ReliabilityConfig) -> PsfDecision:
    """Smallest splitting factor that keeps the closest pair at ``snr_min``."""
    if math.isinf(d0):
        return PsfDecision(cfg.rho_min, d0, True)
    S = cfg.snr_min_linear
    margin = (0.5 * d0) ** 2 - S * noise.sigma2
    if margin <= 0:
        return PsfDecision(1.0, d0, False)
    rho = S * noise.delta2 / margin
    if rho > 1.0:
        return PsfDecision(1.0, d0, False)
    return PsfDecision(max(rho, cfg.rho_min), d0, True)


def psf_from_distances(d0: np.ndarray, noise: NoiseParams, cfg: ReliabilityConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`psf_from_distance`; returns ``(rho, feasible)``."""
    d0 = np.asarray(d0, dtype=float)
    S = cfg.snr_min_linear
    margin = (0.5 * d0) ** 2 - S * noise.sigma2
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.where(margin > 0, S * noise.delta2 / np.where(margin > 0, margin, 1.0), np.inf)
    raw = np.where(np.isinf(d0), 0.0, raw)
    feasible = raw <= 1.0
    rho = np.where(feasible, np.maximum(raw, cfg.rho_min), 1.0)
    return rho, feasible


def harvested_power_instant(rho, y_abs2, eta: float):
    """(1 - rho) * eta * |y|^2 in watts."""
    return (1.0 - np.asarray(rho)) * eta * np.asarray(y_abs2)


def _received_signal_power(channels: ChannelSet, profiles: Sequence[NodeProfile], P_t: float) -> float:
    if len(profiles) != channels.n_nodes:
        raise ValueError("one profile per channel required")
    duty = np.array([pr.duty_cycle for pr in profiles])
    return P_t * float(np.sum(np.abs(channels.h) ** 2 * duty))


def mean_harvested_closed_form(
    rho_const: float,
    channels: ChannelSet,
    profiles: Sequence[NodeProfile],
    P_t: float,
    sigma2: float,
    eta: float,
) -> float:
    """Mean linear harvest for a constant splitting factor."""
    if not 0 <= rho_const <= 1:
        raise ValueError("rho must lie in [0, 1]")
    return (1.0 - rho_const) * eta * (_received_signal_power(channels, profiles, P_t) + sigma2)


def harvested_power_nonlinear(rho, y_abs2, params: NonlinearHarvestParams):
    """Logistic (saturating) harvester evaluated per symbol, in watts."""
    x = (1.0 - np.asarray(rho)) * np.asarray(y_abs2)
    e = math.exp(params.psi * params.phi)
    # 1 / (1 + exp(-psi (x - phi))) computed without overflow
    sig = 0.5 * (1.0 + np.tanh(0.5 * params.psi * (x - params.phi)))
    return (params.varphi * (1.0 + e) * sig - params.varphi) / (e * params.T)


def average_snr(rho: float, channels: ChannelSet, profiles: Sequence[NodeProfile], P_t: float, noise: NoiseParams) -> float:
    return rho * _received_signal_power(channels, profiles, P_t) / (rho * noise.sigma2 + noise.delta2)


def instantaneous_snr(rho: float, state, symbols, channels: ChannelSet, P_t: float, noise: NoiseParams) -> float:
    a = np.asarray(symbols, dtype=float) * np.asarray(state)
    sig = abs(complex(np.dot(channels.h, a))) ** 2
    return rho * P_t * sig / (rho * noise.sigma2 + noise.delta2)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(w):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(w, dtype=float)) + 30.0


def watts_to_dbuw(w):
    """Power in dB relative to 1 microwatt."""
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(w, dtype=float) / 1e-6)
