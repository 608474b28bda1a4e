import math

import numpy as np
import pytest

from swiptsim.channel import (
    ChannelParams,
    ChannelSet,
    NoiseParams,
    complex_gaussian,
    draw_channel,
    los_phase,
    path_loss_gain,
    received_sample,
    received_signal,
)
from swiptsim.traffic import NodeProfile, generate_trace

P = ChannelParams()


def test_params_validation():
    with pytest.raises(ValueError):
        ChannelParams(rician_k=-1)
    with pytest.raises(ValueError):
        ChannelParams(path_loss_exponent=0)
    with pytest.raises(ValueError):
        NoiseParams(-1e-14, 1e-11)
    with pytest.raises(ValueError):
        ChannelSet(np.ones(2), np.ones(3))
    with pytest.raises(ValueError):
        draw_channel(0.0, P, np.random.default_rng(0))


def test_free_space_reference():
    lam = 299_792_458.0 / 900e6
    assert path_loss_gain(1.0, P) == pytest.approx((lam / (4 * math.pi)) ** 2, rel=1e-12)
    assert path_loss_gain(10.0, P) == pytest.approx(path_loss_gain(1.0, P) / 100, rel=1e-12)


def test_pure_los_limit():
    for K in (math.inf, 1e9):
        h = draw_channel(4.0, ChannelParams(rician_k=K), np.random.default_rng(0))
        assert abs(h) == pytest.approx(math.sqrt(path_loss_gain(4.0, P)), rel=1e-4)
        assert np.angle(h) == pytest.approx(np.angle(np.exp(1j * los_phase(4.0, P))), abs=1e-4)


@pytest.mark.parametrize("K,n", [(0.0, 200_000), (3.0, 1_000_000), (10.0, 200_000)])
def test_unit_mean_power(K, n):
    rng = np.random.default_rng(42)
    params = ChannelParams(rician_k=K)
    h = np.array([draw_channel(1.0, params, rng) for _ in range(n)])
    assert np.mean(np.abs(h) ** 2) == pytest.approx(path_loss_gain(1.0, params), rel=0.01)


def test_rician_magnitude_distribution():
    # K factor recovered from the moments of |h|^2
    rng = np.random.default_rng(3)
    K = 3.0
    h = np.array([draw_channel(5.0, ChannelParams(rician_k=K), rng) for _ in range(40000)])
    pw = np.abs(h) ** 2 / path_loss_gain(5.0, P)
    # E|g|^4 = (2 + 4K + K^2) / (K + 1)^2 for unit mean power
    assert np.mean(pw ** 2) == pytest.approx((2 + 4 * K + K * K) / (K + 1) ** 2, rel=0.03)


def test_received_sample_noiseless():
    ch = ChannelSet(np.array([0.3 + 0.1j, -0.2j]))
    quiet = NoiseParams(0.0, 0.0)
    assert received_sample([0, 0], [1, -1], ch, 2.0, quiet) == 0
    assert received_sample([1, 0], [1, -1], ch, 2.0, quiet) == pytest.approx(math.sqrt(2) * (0.3 + 0.1j))
    # linear in sqrt(P_t) and in each symbol
    y1 = received_sample([1, 1], [1, 1], ch, 1.0, quiet)
    y4 = received_sample([1, 1], [1, 1], ch, 4.0, quiet)
    assert y4 == pytest.approx(2 * y1)
    assert received_sample([1, 1], [-1, -1], ch, 1.0, quiet) == pytest.approx(-y1)
    with pytest.raises(ValueError):
        received_sample([1, 1], [1, 1], ch, 1.0, NoiseParams(1e-3, 0))


def test_complex_gaussian_variance():
    z = complex_gaussian(np.random.default_rng(0), 200_000, 3.0)
    assert np.mean(np.abs(z) ** 2) == pytest.approx(3.0, rel=0.01)
    assert abs(np.mean(z.real * z.imag)) < 0.02


def test_received_power_matches_duty_cycle():
    h = np.array([0.7, 0.4 - 0.3j, 0.2j])
    profs = [NodeProfile(0.1, 5), NodeProfile(0.3, 4), NodeProfile(0.05, 10)]
    M = 1_000_000
    tr = generate_trace(profs, M, seed=4)
    sigma2 = 0.05
    w = complex_gaussian(np.random.default_rng(1), M, sigma2)
    y = received_signal(tr.measured_symbols.astype(float), h, 1.0, w)
    expect = sum(abs(hn) ** 2 * pr.duty_cycle for hn, pr in zip(h, profs)) + sigma2
    assert np.mean(np.abs(y) ** 2) == pytest.approx(expect, rel=0.01)
