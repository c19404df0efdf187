"""Maximum-likelihood and greedy frame detectors.

Both detectors are pure functions of the received vector and the channel
knowledge they are allowed to use.  Ties always resolve to the lowest
antenna index, then the lowest symbol index.  The batch kernels carry the
actual arithmetic; the per-instance functions wrap a batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, hypothesis_gains
from .errors import ShapeError
from .modulation import MODE_SM, MODE_SSK, MODES, SSK_SYMBOL, Constellation
from .errors import ConfigurationError


@dataclass
class DetectionResult:
    """Estimated (antenna, symbol) pair plus the winning metric (diagnostic)."""

    antenna: int
    symbol: int
    metric: float


def _detector_points(c: Constellation | None, mode: str) -> np.ndarray:
    if mode not in MODES:
        raise ConfigurationError(f"unsupported mode {mode!r}; expected one of {MODES}")
    if mode == MODE_SSK:
        return np.array([SSK_SYMBOL])
    if c is None:
        raise ConfigurationError("SM mode requires a constellation")
    return c.points


def ml_decide_batch(
    y: np.ndarray, hyp: np.ndarray, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Joint minimum-residual search over (antenna hypothesis, symbol).

    y:      (B, Nr) received vectors
    hyp:    (B, Nr, K) effective channel of each aligned-antenna hypothesis
    points: (M,) candidate symbols

    Returns 1-based antenna and symbol index arrays plus the winning metric.
    The flattened argmin scans antennas outermost, so ties fall to the
    lowest antenna index, then the lowest symbol index.
    """
    b, _, k = hyp.shape
    m = points.shape[0]
    diff = y[:, :, None, None] - hyp[:, :, :, None] * points[None, None, None, :]
    metrics = (diff.real**2 + diff.imag**2).sum(axis=1).reshape(b, k * m)
    flat = metrics.argmin(axis=1)
    winner = metrics[np.arange(b), flat]
    return flat // m + 1, flat % m + 1, winner


def greedy_decide_batch(
    y: np.ndarray, amp_sums: np.ndarray, points: np.ndarray, mode: str
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Two-stage greedy rule: max received energy, then scalar nearest symbol.

    y:        (B, Nr) received vectors
    amp_sums: (B, Nr) coherent amplitude sums (sum of beta over reflectors)
    points:   (M,) candidate symbols

    In SSK mode the symbol stage is skipped and the metric is the winning
    received energy; in SM mode the metric is the winning scalar distance.
    """
    b = y.shape[0]
    energy = y.real**2 + y.imag**2
    ant = energy.argmax(axis=1)
    if mode == MODE_SSK:
        return ant + 1, np.ones(b, dtype=np.int64), energy[np.arange(b), ant]
    rows = np.arange(b)
    gain = amp_sums[rows, ant]
    resid = y[rows, ant][:, None] - gain[:, None] * points[None, :]
    dist = resid.real**2 + resid.imag**2
    sym = dist.argmin(axis=1)
    return ant + 1, sym + 1, dist[rows, sym]


def _check_received(y, channel: ChannelRealization) -> np.ndarray:
    y = np.asarray(y, dtype=np.complex128)
    if y.ndim != 1 or y.shape[0] != channel.nr:
        raise ShapeError(f"received vector must have length {channel.nr}, got shape {y.shape}")
    return y


def ml_detect(
    y, channel: ChannelRealization, c: Constellation | None, mode: str = MODE_SM
) -> DetectionResult:
    """Optimal joint detection of the antenna index and transmitted symbol.

    Evaluates the residual of every (antenna hypothesis, symbol) pair
    against the full hypothesis channel; for SSK the symbol search
    collapses to the fixed unit symbol.
    """
    y = _check_received(y, channel)
    points = _detector_points(c, mode)
    hyp = hypothesis_gains(channel)
    ant, sym, metric = ml_decide_batch(y[None, :], hyp[None, :, :], points)
    return DetectionResult(antenna=int(ant[0]), symbol=int(sym[0]), metric=float(metric[0]))


def greedy_detect(
    y, channel: ChannelRealization, c: Constellation | None, mode: str = MODE_SM
) -> DetectionResult:
    """Suboptimal detection without per-path phase knowledge.

    Picks the antenna with the largest received energy, then matches the
    scalar sample against the coherent amplitude sum of that antenna.
    """
    y = _check_received(y, channel)
    points = _detector_points(c, mode)
    amp_sums = channel.amplitudes.sum(axis=1)
    ant, sym, metric = greedy_decide_batch(y[None, :], amp_sums[None, :], points, mode)
    return DetectionResult(antenna=int(ant[0]), symbol=int(sym[0]), metric=float(metric[0]))
