"""Physical-layer simulation: fading, power control, superposition, noise.

Received slot ``l`` is ``y_l = sum_k h_{k,l} p_{k,l} x_{k,l} + z_l``.  With
channel inversion ``h p = 1`` and the sum reduces to the aligned modulation
sequence; with a power plan ``p`` comes from the adaptation step and ``x``
from a fixed pattern.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "UNIT",
    "RAYLEIGH",
    "ChannelRealization",
    "NoiseModel",
    "DeepFadeError",
    "sample_channel",
    "channel_inversion",
    "invert_channel",
    "noise_for_snr",
    "transmit",
    "add_noise",
    "trial_rng",
]

UNIT = "unit"
RAYLEIGH = "rayleigh"
INVERSION_FLOOR = 1e-6


class DeepFadeError(ValueError):
    """Channel magnitude at or below the inversion floor."""


@dataclass(frozen=True)
class ChannelRealization:
    """Coefficients ``h`` of shape ``(K, L)`` and the model that drew them."""

    h: np.ndarray
    model: str

    @property
    def K(self) -> int:
        return self.h.shape[0]

    @property
    def L(self) -> int:
        return self.h.shape[1]


@dataclass(frozen=True)
class NoiseModel:
    """Complex noise of total variance ``sigma2`` (half per real dimension)."""

    sigma2: float
    snr_db: float = float("inf")
    signal_power_ref: float = 1.0
    noiseless: bool = False

    def __post_init__(self):
        if self.noiseless:
            object.__setattr__(self, "sigma2", 0.0)
        elif not self.sigma2 > 0:
            raise ValueError(f"noise variance must be positive, got {self.sigma2}")


def noise_for_snr(snr_db: float, signal_power: float) -> NoiseModel:
    """``sigma2 = P_bar * 10^(-SNR/10)`` for mean received signal power ``P_bar``."""
    sigma2 = signal_power * 10.0 ** (-snr_db / 10.0)
    return NoiseModel(sigma2, snr_db, signal_power)


def sample_channel(K: int, L: int, model: str = RAYLEIGH,
                   rng: Optional[np.random.Generator] = None) -> ChannelRealization:
    """Draw ``K x L`` coefficients: all ones, or i.i.d. ``CN(0, 1)``."""
    if model == UNIT:
        return ChannelRealization(np.ones((K, L), dtype=complex), UNIT)
    if model != RAYLEIGH:
        raise ValueError(f"unknown channel model {model!r}")
    if rng is None:
        raise ValueError("a random generator is required for fading channels")
    h = (rng.standard_normal((K, L)) + 1j * rng.standard_normal((K, L))) / np.sqrt(2.0)
    return ChannelRealization(h, RAYLEIGH)


def channel_inversion(h: complex, floor: float = INVERSION_FLOOR) -> complex:
    """``conj(h) / |h|^2``.

    Raises
    ------
    DeepFadeError
        If ``|h| <= floor``.
    """
    mag = abs(h)
    if mag <= floor:
        raise DeepFadeError(f"|h| = {mag:.3g} is at or below the inversion floor {floor:g}")
    return complex(np.conj(h) / mag ** 2)


def invert_channel(h: np.ndarray, floor: float = INVERSION_FLOOR,
                   truncate: bool = False) -> np.ndarray:
    """Elementwise inversion; ``truncate`` silences deep-faded entries instead of raising."""
    h = np.asarray(h, dtype=complex)
    mag = np.abs(h)
    faded = mag <= floor
    if faded.any() and not truncate:
        raise DeepFadeError(
            f"{int(faded.sum())} coefficient(s) at or below the inversion floor {floor:g}")
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(faded, 0.0, np.conj(h) / np.where(faded, 1.0, mag ** 2))
    return p


def add_noise(y: np.ndarray, noise: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """Circular complex Gaussian noise added to ``y``; draws even when noiseless."""
    y = np.asarray(y, dtype=complex)
    z = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
    return y + np.sqrt(noise.sigma2 / 2.0) * z


def transmit(indices, symbols: np.ndarray, channel: ChannelRealization,
             power: Optional[np.ndarray], noise: NoiseModel,
             rng: np.random.Generator) -> np.ndarray:
    """Received sequences for one or more combinations.

    Parameters
    ----------
    indices : array_like
        ``(K,)`` or ``(n, K)`` alphabet indices.
    symbols : ndarray
        ``(K, Q, L)`` per-node symbol table: the modulation rows ``X_k`` in
        design mode, the fixed pattern in power-plan mode.
    channel : ChannelRealization
    power : ndarray or None
        ``(K, L)`` power coefficients; ``None`` applies channel inversion.
    noise : NoiseModel
    rng : numpy.random.Generator
        Source of the noise draw.

    Returns
    -------
    ndarray
        ``(n, L)`` complex, or ``(L,)`` for a single combination.
    """
    idx = np.asarray(indices, dtype=np.int64)
    single = idx.ndim == 1
    idx = np.atleast_2d(idx)
    K, Q, L = symbols.shape
    if idx.shape[1] != K or channel.K != K or channel.L != L:
        raise ValueError("combination, symbol table and channel dimensions disagree")
    if power is None:
        power = invert_channel(channel.h)
    gain = channel.h * power                                   # (K, L)
    y = np.zeros((idx.shape[0], L), dtype=complex)
    for k in range(K):
        y += symbols[k, idx[:, k], :] * gain[k][None, :]
    y = add_noise(y, noise, rng)
    return y[0] if single else y


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator that depends only on ``(seed, key)``, never on scheduling."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))
