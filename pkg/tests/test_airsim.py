import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semac.airsim import (RAYLEIGH, UNIT, ChannelRealization, DeepFadeError, NoiseModel,
                          add_noise, channel_inversion, invert_channel, noise_for_snr,
                          sample_channel, transmit, trial_rng)

QUIET = NoiseModel(0.0, noiseless=True)


def symbols(rng, K, Q, L):
    return rng.standard_normal((K, Q, L)) + 1j * rng.standard_normal((K, Q, L))


class TestChannel:
    def test_unit(self):
        ch = sample_channel(3, 2, UNIT)
        assert ch.h.dtype == complex and np.all(ch.h == 1)

    def test_rayleigh_power(self):
        ch = sample_channel(10, 10**4, RAYLEIGH, trial_rng(0, 2))
        assert abs(np.mean(np.abs(ch.h) ** 2) - 1) <= 0.02
        assert abs(np.mean(ch.h.real ** 2) - 0.5) <= 0.01

    def test_same_seed_identical(self):
        a = sample_channel(4, 2, RAYLEIGH, trial_rng(7, 2, 3))
        b = sample_channel(4, 2, RAYLEIGH, trial_rng(7, 2, 3))
        np.testing.assert_array_equal(a.h, b.h)
        c = sample_channel(4, 2, RAYLEIGH, trial_rng(7, 2, 4))
        assert not np.array_equal(a.h, c.h)

    def test_errors(self):
        with pytest.raises(ValueError):
            sample_channel(2, 2, "rician", trial_rng(0))
        with pytest.raises(ValueError):
            sample_channel(2, 2, RAYLEIGH)


class TestInversion:
    def test_unit_modulus(self):
        p = channel_inversion(0.6 + 0.8j)
        assert p == pytest.approx(0.6 - 0.8j)
        assert (0.6 + 0.8j) * p == pytest.approx(1.0)

    def test_real(self):
        assert channel_inversion(2) == 0.5

    def test_deep_fade(self):
        with pytest.raises(DeepFadeError):
            channel_inversion(1e-9)

    def test_vector_truncate(self):
        h = np.array([[2.0, 1e-9]])
        with pytest.raises(DeepFadeError):
            invert_channel(h)
        np.testing.assert_array_equal(invert_channel(h, truncate=True), [[0.5, 0.0]])

    @settings(max_examples=50, deadline=None)
    @given(st.complex_numbers(min_magnitude=1e-5, max_magnitude=1e5))
    def test_identity(self, h):
        assert abs(h * channel_inversion(h) - 1) <= 1e-12


class TestNoise:
    def test_positive_variance_required(self):
        with pytest.raises(ValueError):
            NoiseModel(0.0)
        assert NoiseModel(5.0, noiseless=True).sigma2 == 0.0

    def test_snr_map(self):
        n = noise_for_snr(20.0, 2.0)
        assert n.sigma2 == pytest.approx(0.02)

    def test_variance(self):
        y = add_noise(np.zeros(10**5), NoiseModel(0.01), trial_rng(3, 1))
        assert abs(np.var(y) / 0.01 - 1) <= 0.03
        assert abs(np.var(y.real) / 0.005 - 1) <= 0.03


class TestTransmit:
    def test_superposition(self):
        sym = np.full((2, 1, 1), 0.5 + 0j)
        y = transmit([0, 0], sym, sample_channel(2, 1, UNIT), None, QUIET, trial_rng(0))
        assert y.tolist() == [1.0]

    def test_inversion_aligns(self):
        rng = np.random.default_rng(0)
        sym = symbols(rng, 3, 4, 2)
        idx = rng.integers(0, 4, (20, 3))
        aligned = sum(sym[k, idx[:, k]] for k in range(3))
        outs = []
        for t in range(2):
            ch = sample_channel(3, 2, RAYLEIGH, trial_rng(1, 2, t))
            outs.append(transmit(idx, sym, ch, None, QUIET, trial_rng(1, 1, t)))
            np.testing.assert_allclose(outs[-1], aligned, atol=1e-12)
        np.testing.assert_allclose(outs[0], outs[1], atol=1e-12)

    def test_power_plan_mode(self):
        rng = np.random.default_rng(1)
        sym = symbols(rng, 2, 4, 2)
        ch = ChannelRealization(symbols(rng, 2, 1, 2)[:, 0], RAYLEIGH)
        p = symbols(rng, 2, 1, 2)[:, 0]
        y = transmit([1, 3], sym, ch, p, QUIET, trial_rng(0))
        expect = ch.h[0] * p[0] * sym[0, 1] + ch.h[1] * p[1] * sym[1, 3]
        np.testing.assert_allclose(y, expect, atol=1e-14)

    def test_noise_additivity(self):
        rng = np.random.default_rng(2)
        sym = symbols(rng, 2, 2, 3)
        ch = sample_channel(2, 3, UNIT)
        noise = NoiseModel(0.3)
        noisy = transmit([0, 1], sym, ch, None, noise, trial_rng(5, 1))
        clean = transmit([0, 1], sym, ch, None, QUIET, trial_rng(5, 1))
        z = add_noise(np.zeros(3), noise, trial_rng(5, 1))
        np.testing.assert_allclose(noisy - clean, z, atol=1e-14)

    def test_dimension_errors(self):
        sym = np.zeros((2, 2, 1), complex)
        with pytest.raises(ValueError):
            transmit([0, 0, 0], sym, sample_channel(2, 1, UNIT), None, QUIET, trial_rng(0))
        with pytest.raises(ValueError):
            transmit([0, 0], sym, sample_channel(2, 3, UNIT), None, QUIET, trial_rng(0))

    def test_deep_fade_propagates(self):
        ch = ChannelRealization(np.array([[1.0], [1e-9]], complex), RAYLEIGH)
        with pytest.raises(DeepFadeError):
            transmit([0, 0], np.ones((2, 1, 1), complex), ch, None, QUIET, trial_rng(0))


def test_trial_streams_are_pure():
    a = trial_rng(11, 1, 40).standard_normal(5)
    _ = trial_rng(11, 1, 39).standard_normal(100)
    b = trial_rng(11, 1, 40).standard_normal(5)
    np.testing.assert_array_equal(a, b)
