"""Weibull-faded reflector channels, phase alignment, and noisy reception.

The link is a planar surface of ``n`` passive reflectors illuminated by a
nearby source; each reflector-to-antenna path has an amplitude ``beta``
(Weibull fading gain) and a phase ``theta``.  Steering the surface phases to
``theta[m, :]`` makes all paths add coherently at receive antenna ``m``.
Antenna indices are 1-based throughout, matching the usual notation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError

TWO_PI = 2.0 * math.pi


def weibull_scale(shape: float, power: float) -> float:
    """Scale factor s so that E[(s*W)^2] = power for W ~ Weibull(shape, scale 1).

    "Average fading power" is taken as the mean-square amplitude, so the
    scale is (power / Gamma(1 + 2/shape))^(1/2).
    """
    if shape <= 0.0:
        raise ParameterError(f"Weibull shape must be positive, got {shape}")
    if power <= 0.0:
        raise ParameterError(f"average fading power must be positive, got {power}")
    return math.sqrt(power / math.gamma(1.0 + 2.0 / shape))


@dataclass
class ChannelRealization:
    """One block-fading draw: per-path gains of an Nr x N reflector link.

    amplitudes: nonnegative fading gains beta, shape (Nr, N)
    phases:     path phases theta in [0, 2*pi), shape (Nr, N)
    """

    amplitudes: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.float64)
        self.phases = np.asarray(self.phases, dtype=np.float64)
        if self.amplitudes.ndim != 2 or self.amplitudes.shape != self.phases.shape:
            raise ShapeError(
                f"amplitudes {self.amplitudes.shape} and phases "
                f"{self.phases.shape} must be equal 2-D shapes"
            )
        if np.any(self.amplitudes < 0.0):
            raise ParameterError("channel amplitudes must be nonnegative")
        if np.any(self.phases < 0.0) or np.any(self.phases >= TWO_PI):
            raise ParameterError("channel phases must lie in [0, 2*pi)")

    @property
    def nr(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def n(self) -> int:
        return self.amplitudes.shape[1]


@dataclass
class RisPhaseProfile:
    """Per-reflector surface phases Phi, length N, entries in [0, 2*pi)."""

    phases: np.ndarray

    def __post_init__(self):
        self.phases = np.asarray(self.phases, dtype=np.float64)
        if self.phases.ndim != 1:
            raise ShapeError("phase profile must be a 1-D vector")
        if np.any(self.phases < 0.0) or np.any(self.phases >= TWO_PI):
            raise ParameterError("profile phases must lie in [0, 2*pi)")


@dataclass
class EffectiveChannel:
    """Post-reflection complex gain seen by each receive antenna (length Nr)."""

    gains: np.ndarray

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=np.complex128)
        if self.gains.ndim != 1:
            raise ShapeError("effective channel must be a 1-D vector")


@dataclass
class NoiseSpec:
    """Receiver noise and symbol energy.

    n0 is the total complex noise variance (n0/2 per real dimension);
    es is the energy per symbol.  ``noiseless`` keeps n0 for bookkeeping
    but suppresses the noise draw in :func:`transmit`.
    """

    n0: float
    es: float = 1.0
    noiseless: bool = False

    def __post_init__(self):
        if self.n0 <= 0.0:
            raise ParameterError(f"noise variance must be positive, got {self.n0}")
        if self.es <= 0.0:
            raise ParameterError(f"symbol energy must be positive, got {self.es}")


def sample_weibull_amplitude(shape: float, power: float, rng: np.random.Generator) -> float:
    """Draw one fading amplitude with E[beta^2] = power."""
    scale = weibull_scale(shape, power)
    return float(scale * rng.weibull(shape))


def sample_channel(
    nr: int, n: int, shape: float, power: float, rng: np.random.Generator
) -> ChannelRealization:
    """Draw an independent Nr x N realization.

    Amplitudes are i.i.d. Weibull (see :func:`weibull_scale`); phases are
    i.i.d. uniform on [0, 2*pi), independent of the amplitudes.
    """
    if nr < 1 or n < 1:
        raise ParameterError(f"channel dimensions must be >= 1, got nr={nr}, n={n}")
    scale = weibull_scale(shape, power)
    amplitudes = scale * rng.weibull(shape, size=(nr, n))
    phases = rng.uniform(0.0, TWO_PI, size=(nr, n))
    return ChannelRealization(amplitudes=amplitudes, phases=phases)


def align_phases(channel: ChannelRealization, m: int) -> RisPhaseProfile:
    """Surface profile that cancels the path phases toward antenna m (1-based)."""
    if not 1 <= m <= channel.nr:
        raise IndexError(f"antenna index {m} out of range 1..{channel.nr}")
    return RisPhaseProfile(phases=channel.phases[m - 1].copy())


def effective_channel(
    channel: ChannelRealization, profile: RisPhaseProfile
) -> EffectiveChannel:
    """Coherent per-antenna sum h_l = sum_i beta[l,i] * exp(j*(Phi[i] - theta[l,i]))."""
    if profile.phases.shape[0] != channel.n:
        raise ShapeError(
            f"profile length {profile.phases.shape[0]} != reflector count {channel.n}"
        )
    rotated = np.exp(1j * (profile.phases[np.newaxis, :] - channel.phases))
    gains = (channel.amplitudes * rotated).sum(axis=1)
    return EffectiveChannel(gains=gains)


def hypothesis_gains(channel: ChannelRealization) -> np.ndarray:
    """Effective channels for every aligned-antenna hypothesis, as an (Nr, Nr) matrix.

    Column i (0-based) equals ``effective_channel(channel, align_phases(channel, i+1))``.
    """
    phasor = np.exp(-1j * channel.phases)
    g = channel.amplitudes * phasor
    return g @ np.conj(phasor).T


def transmit(
    h: EffectiveChannel, x: complex, noise: NoiseSpec, rng: np.random.Generator
) -> np.ndarray:
    """Received vector y = sqrt(es) * h * x + n with circularly symmetric noise."""
    y = math.sqrt(noise.es) * h.gains * x
    if noise.noiseless:
        return y
    sigma = math.sqrt(noise.n0 / 2.0)
    nr = h.gains.shape[0]
    w = rng.standard_normal(nr) + 1j * rng.standard_normal(nr)
    return y + sigma * w


def instantaneous_snr(channel: ChannelRealization, m: int, noise: NoiseSpec) -> float:
    """Post-alignment SNR at antenna m: (sum_i beta[m,i])^2 * es / n0."""
    if not 1 <= m <= channel.nr:
        raise IndexError(f"antenna index {m} out of range 1..{channel.nr}")
    coherent = channel.amplitudes[m - 1].sum()
    return float(coherent * coherent * noise.es / noise.n0)


# ---------------------------------------------------------------------------
# Vectorized batch kernels (one leading axis of independent realizations).
# The per-realization functions above are thin single-item views of these.
# ---------------------------------------------------------------------------


def sample_channel_batch(
    count: int, nr: int, n: int, shape: float, power: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``count`` independent realizations: (amplitudes, phases), each (count, Nr, N)."""
    if nr < 1 or n < 1:
        raise ParameterError(f"channel dimensions must be >= 1, got nr={nr}, n={n}")
    scale = weibull_scale(shape, power)
    amplitudes = scale * rng.weibull(shape, size=(count, nr, n))
    phases = rng.uniform(0.0, TWO_PI, size=(count, nr, n))
    return amplitudes, phases


def hypothesis_gains_batch(amplitudes: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """Batched :func:`hypothesis_gains`: (count, Nr, N) arrays -> (count, Nr, Nr)."""
    phasor = np.exp(-1j * phases)
    g = amplitudes * phasor
    return np.einsum("bln,bin->bli", g, np.conj(phasor))
