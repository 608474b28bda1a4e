"""Static Rician channels with free-space path loss, and the received sample."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ChannelParams:
    rician_k: float = 3.0
    path_loss_exponent: float = 2.0
    carrier_hz: float = 900e6
    reference_distance_m: float = 1.0

    def __post_init__(self):
        if self.rician_k < 0:
            raise ValueError("rician_k must be >= 0")
        if self.path_loss_exponent <= 0:
            raise ValueError("path_loss_exponent must be > 0")
        if self.carrier_hz <= 0 or self.reference_distance_m <= 0:
            raise ValueError("carrier_hz and reference_distance_m must be > 0")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz


@dataclass(frozen=True)
class NoiseParams:
    """Receiver noise ``sigma2`` and splitter processing noise ``delta2`` (W)."""

    sigma2: float
    delta2: float

    def __post_init__(self):
        if self.sigma2 < 0 or self.delta2 < 0:
            raise ValueError("noise variances must be non-negative")


@dataclass(frozen=True)
class ChannelSet:
    """Channel gains known to the relay and their uncertainty variances.

    ``h`` is what the receiver uses to build constellations; ``theta2`` the
    variance of the (unknown) deviation of the true gain from ``h``.
    """

    h: np.ndarray
    theta2: np.ndarray = field(default=None)

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.h, dtype=complex))
        theta2 = np.zeros(h.shape) if self.theta2 is None else np.atleast_1d(np.asarray(self.theta2, float))
        if theta2.shape != h.shape:
            raise ValueError("theta2 must match h in length")
        if np.any(theta2 < 0):
            raise ValueError("theta2 must be non-negative")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "theta2", theta2)

    @property
    def n_nodes(self) -> int:
        return len(self.h)

    @property
    def theta(self) -> np.ndarray:
        return np.sqrt(self.theta2)


def path_loss_gain(distance_m, params: ChannelParams):
    """Power gain of the log-distance model anchored at free space.

    PL(d) = (lambda / (4 pi d0))^2 * (d0 / d)^gamma
    """
    d0 = params.reference_distance_m
    ref = (params.wavelength / (4.0 * math.pi * d0)) ** 2
    return ref * (d0 / np.asarray(distance_m, dtype=float)) ** params.path_loss_exponent


def los_phase(distance_m, params: ChannelParams):
    return -2.0 * math.pi * np.asarray(distance_m, dtype=float) / params.wavelength


def draw_channel(distance_m: float, params: ChannelParams, rng: np.random.Generator) -> complex:
    """One quasi-static Rician gain, unit mean power before path loss."""
    if distance_m <= 0:
        raise ValueError("distance must be positive")
    K = params.rician_k
    # draw the scattered part even for K = inf so the stream stays aligned
    scatter = (rng.standard_normal() + 1j * rng.standard_normal()) / math.sqrt(2.0)
    los = complex(np.exp(1j * los_phase(distance_m, params)))
    if math.isinf(K):
        g = los
    else:
        g = math.sqrt(K / (K + 1.0)) * los + math.sqrt(1.0 / (K + 1.0)) * scatter
    return complex(math.sqrt(path_loss_gain(distance_m, params)) * g)


def complex_gaussian(rng: np.random.Generator, size, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples of the given variance."""
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def received_sample(
    state: Sequence[int],
    symbols: Sequence[int],
    channels: ChannelSet,
    P_t: float,
    noise: NoiseParams,
    rng: np.random.Generator | None = None,
) -> complex:
    """sqrt(P_t) * sum_n h_n a_n + w with w ~ CN(0, sigma2)."""
    s = np.asarray(state)
    a = np.asarray(symbols) * s
    if len(s) != channels.n_nodes or len(a) != channels.n_nodes:
        raise ValueError("dimension mismatch")
    y = math.sqrt(P_t) * complex(np.dot(channels.h, a))
    if noise.sigma2 > 0:
        if rng is None:
            raise ValueError("rng required for non-zero noise")
        y += complex(complex_gaussian(rng, None, noise.sigma2))
    return y


def received_signal(symbols: np.ndarray, h: np.ndarray, P_t: float, noise: np.ndarray) -> np.ndarray:
    """Vectorized received samples; ``symbols`` has shape (N, M), 0 when idle."""
    return math.sqrt(P_t) * (h @ symbols) + noise
