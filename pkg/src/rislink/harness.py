"""Seeded Monte Carlo bit-error-rate estimation.

Frames are simulated in fixed-size batches; batch k of a point draws all
its randomness from a stream keyed by (point seed, k), so every frame's
randomness is independent of scheduling and the resulting record is
identical whether batches run on one worker or many.  The stopping rule is
evaluated at batch boundaries in index order.
"""

from __future__ import annotations

import math
import multiprocessing
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bdnn import (
    FEATURE_MODES,
    FEATURE_SIGNED,
    MlpParams,
    _true_aligned_column,
    bdnn_decide_batch,
)
from .channel import TWO_PI, hypothesis_gains_batch, sample_channel_batch
from .detectors import greedy_decide_batch, ml_decide_batch
from .errors import ConfigurationError, ParameterError
from .modulation import (
    MODE_SM,
    MODE_SSK,
    MODES,
    SSK_SYMBOL,
    Constellation,
    build_constellation,
)

DETECTOR_ML = "ml"
DETECTOR_GREEDY = "greedy"
DETECTOR_BDNN = "bdnn"
DETECTORS = (DETECTOR_ML, DETECTOR_GREEDY, DETECTOR_BDNN)

DEFAULT_MIN_ERRORS = 100
DEFAULT_MAX_BITS = 10_000_000

# Frames per batch, sized to keep per-batch channel arrays around 2M elements.
_BATCH_ELEMENT_BUDGET = 2_097_152

_SCHEME_DEFAULT_ORDER = {"bpsk": 2, "qpsk": 4, "mqam": 16}


def _is_pow2(v: int) -> bool:
    return v >= 1 and v & (v - 1) == 0


@dataclass
class Scenario:
    """Everything that defines one simulated link except the SNR point.

    ``noiseless`` and ``fixed_beta`` are diagnostic hooks: the first
    suppresses the receiver noise draw, the second replaces the Weibull
    amplitudes with a constant (phases stay random), which reduces the
    degenerate Nr=1, N=1 case to a plain AWGN channel.
    """

    mode: str
    nr: int
    n: int
    scheme: str | None = None
    m: int | None = None
    alpha: float = 1.2
    omega: float = 1.0
    detector: str = DETECTOR_ML
    feature_mode: str = FEATURE_SIGNED
    noiseless: bool = False
    fixed_beta: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not _is_pow2(self.nr):
            raise ConfigurationError(f"nr must be a power of two, got {self.nr}")
        if self.n < 1:
            raise ConfigurationError(f"reflector count must be >= 1, got {self.n}")
        if self.detector not in DETECTORS:
            raise ConfigurationError(
                f"unknown detector {self.detector!r}; expected one of {DETECTORS}"
            )
        if self.feature_mode not in FEATURE_MODES:
            raise ConfigurationError(f"unknown feature mode {self.feature_mode!r}")
        if self.alpha <= 0.0 or self.omega <= 0.0:
            raise ConfigurationError(
                f"fading parameters must be positive, got alpha={self.alpha}, "
                f"omega={self.omega}"
            )
        if self.fixed_beta is not None and self.fixed_beta <= 0.0:
            raise ConfigurationError(f"fixed_beta must be positive, got {self.fixed_beta}")
        if self.mode == MODE_SM:
            if self.scheme is None:
                raise ConfigurationError("SM scenarios require a scheme")
            if self.m is None:
                self.m = _SCHEME_DEFAULT_ORDER[self.scheme]
            if not _is_pow2(self.m):
                raise ConfigurationError(f"constellation order must be a power of two, got {self.m}")

    @property
    def antenna_bits(self) -> int:
        return self.nr.bit_length() - 1

    @property
    def symbol_bits(self) -> int:
        return self.m.bit_length() - 1 if self.mode == MODE_SM else 0

    @property
    def bits_per_frame(self) -> int:
        return self.antenna_bits + self.symbol_bits

    def fingerprint(self) -> str:
        parts = [
            self.mode,
            self.detector,
            f"nr{self.nr}",
            f"n{self.n}",
            f"alpha{self.alpha:g}",
            f"omega{self.omega:g}",
        ]
        if self.mode == MODE_SM:
            parts.insert(2, f"{self.scheme}{self.m}")
        if self.detector == DETECTOR_BDNN:
            parts.append(self.feature_mode)
        if self.noiseless:
            parts.append("noiseless")
        if self.fixed_beta is not None:
            parts.append(f"beta{self.fixed_beta:g}")
        return "-".join(parts)


@dataclass
class StoppingRule:
    """Stop a point once min_bit_errors are seen or max_bits are spent."""

    min_bit_errors: int = DEFAULT_MIN_ERRORS
    max_bits: int = DEFAULT_MAX_BITS

    def __post_init__(self):
        if self.max_bits < self.min_bit_errors:
            raise ConfigurationError(
                f"max_bits ({self.max_bits}) must be >= min_bit_errors "
                f"({self.min_bit_errors})"
            )


@dataclass
class BerRecord:
    """Outcome of one SNR point."""

    snr_db: float
    bits_sent: int
    bit_errors: int
    ber: float
    frames: int
    seed: int
    fingerprint: str


def batch_frames(nr: int, n: int) -> int:
    """Deterministic batch size for a scenario; independent of worker count."""
    return int(min(8192, max(256, _BATCH_ELEMENT_BUDGET // (nr * n))))


@dataclass
class _PointContext:
    """Precomputed per-point state shared by all batches."""

    scenario: Scenario
    seed: int
    n0: float
    frames_per_batch: int
    points: np.ndarray
    inv_label: np.ndarray | None
    label_values: np.ndarray | None
    popcount: np.ndarray
    params: MlpParams | None
    classifier: object = None


def _make_context(
    scenario: Scenario, snr_db: float, seed: int, params: MlpParams | None, classifier=None
) -> _PointContext:
    if seed < 0:
        raise ConfigurationError(f"seed must be nonnegative, got {seed}")
    if scenario.bits_per_frame < 1:
        raise ConfigurationError(
            "scenario carries no information bits (SSK needs nr >= 2)"
        )
    points = np.array([SSK_SYMBOL])
    inv_label = None
    label_values = None
    if scenario.mode == MODE_SM:
        const = build_constellation(scenario.scheme, scenario.m)
        points = const.points
        label_values = const.label_values
        inv_label = np.empty(const.order, dtype=np.int64)
        inv_label[const.label_values] = np.arange(const.order)
    if scenario.detector == DETECTOR_BDNN and scenario.mode == MODE_SM and classifier is None:
        if params is None:
            raise ConfigurationError("B-DNN detection in SM mode requires a trained model")
        if params.layer_sizes[0] != 4 * scenario.nr or params.layer_sizes[-1] != scenario.m:
            raise ConfigurationError(
                f"model sizes {params.layer_sizes} do not match scenario "
                f"(expected input {4 * scenario.nr}, output {scenario.m})"
            )
    table_size = 1 << max(scenario.antenna_bits, scenario.symbol_bits)
    popcount = np.array([bin(i).count("1") for i in range(table_size)], dtype=np.int64)
    return _PointContext(
        scenario=scenario,
        seed=seed,
        n0=10.0 ** (-snr_db / 10.0),
        frames_per_batch=batch_frames(scenario.nr, scenario.n),
        points=points,
        inv_label=inv_label,
        label_values=label_values,
        popcount=popcount,
        params=params,
        classifier=classifier,
    )


def _simulate_batch(ctx: _PointContext, batch_index: int) -> int:
    """Run one batch of frames and return its bit-error count."""
    sc = ctx.scenario
    rng = np.random.default_rng(np.random.SeedSequence((ctx.seed, batch_index)))
    b = ctx.frames_per_batch
    rows = np.arange(b)

    ant0 = rng.integers(0, sc.nr, size=b)
    if sc.mode == MODE_SM:
        labval = rng.integers(0, sc.m, size=b)
        point_idx = ctx.inv_label[labval]
        x = ctx.points[point_idx]
    else:
        labval = None
        x = SSK_SYMBOL

    if sc.fixed_beta is not None:
        amps = np.full((b, sc.nr, sc.n), sc.fixed_beta)
        phases = rng.uniform(0.0, TWO_PI, size=(b, sc.nr, sc.n))
    else:
        amps, phases = sample_channel_batch(b, sc.nr, sc.n, sc.alpha, sc.omega, rng)

    if sc.detector == DETECTOR_GREEDY:
        h_col = _true_aligned_column(amps, phases, ant0)
        hyp = None
    else:
        hyp = hypothesis_gains_batch(amps, phases)
        h_col = hyp[rows, :, ant0]

    y = h_col * (x[:, None] if sc.mode == MODE_SM else x)
    if not sc.noiseless:
        sigma = math.sqrt(ctx.n0 / 2.0)
        y = y + sigma * (
            rng.standard_normal((b, sc.nr)) + 1j * rng.standard_normal((b, sc.nr))
        )

    if sc.detector == DETECTOR_ML:
        ant_hat, sym_hat, _ = ml_decide_batch(y, hyp, ctx.points)
    elif sc.detector == DETECTOR_GREEDY:
        ant_hat, sym_hat, _ = greedy_decide_batch(y, amps.sum(axis=2), ctx.points, sc.mode)
    else:
        ant_hat, sym_hat, _ = bdnn_decide_batch(
            y, hyp, ctx.params, ctx.points, float(sc.n), sc.feature_mode, sc.mode,
            ctx.classifier,
        )

    errors = int(ctx.popcount[ant0 ^ (ant_hat - 1)].sum())
    if sc.mode == MODE_SM:
        labval_hat = ctx.label_values[sym_hat - 1]
        errors += int(ctx.popcount[labval ^ labval_hat].sum())
    return errors


# Worker-side context, installed once per process by the pool initializer.
_WORKER_CTX: _PointContext | None = None


def _worker_init(scenario, snr_db, seed, params):
    global _WORKER_CTX
    _WORKER_CTX = _make_context(scenario, snr_db, seed, params)


def _worker_task(batch_index: int) -> int:
    return _simulate_batch(_WORKER_CTX, batch_index)


def run_ber_point(
    scenario: Scenario,
    snr_db: float,
    stop: StoppingRule | None = None,
    seed: int = 0,
    model: MlpParams | None = None,
    workers: int = 1,
    classifier=None,
) -> BerRecord:
    """Estimate the BER of one scenario at one SNR point.

    The result is a deterministic function of (scenario, snr_db, stop,
    seed); ``workers`` only changes how batches are scheduled.
    ``classifier`` is the testing hook forwarded to the block detector and
    forces sequential execution.
    """
    if stop is None:
        stop = StoppingRule()
    if workers > 1 and classifier is not None:
        raise ConfigurationError("classifier hooks only run with workers=1")
    ctx = _make_context(scenario, snr_db, seed, model, classifier)
    bpf = scenario.bits_per_frame
    frames = 0
    errors = 0

    def _done() -> bool:
        return errors >= stop.min_bit_errors or frames * bpf >= stop.max_bits

    if workers <= 1:
        batch_index = 0
        while True:
            errors += _simulate_batch(ctx, batch_index)
            frames += ctx.frames_per_batch
            batch_index += 1
            if _done():
                break
    else:
        mp_ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(
            max_workers=workers,
            mp_context=mp_ctx,
            initializer=_worker_init,
            initargs=(scenario, snr_db, seed, model),
        ) as pool:
            pending: deque = deque()
            next_index = 0
            while True:
                while len(pending) < 2 * workers:
                    pending.append(pool.submit(_worker_task, next_index))
                    next_index += 1
                errors += pending.popleft().result()
                frames += ctx.frames_per_batch
                if _done():
                    break

    bits = frames * bpf
    return BerRecord(
        snr_db=float(snr_db),
        bits_sent=bits,
        bit_errors=errors,
        ber=errors / bits,
        frames=frames,
        seed=seed,
        fingerprint=scenario.fingerprint(),
    )


def point_seed(master_seed: int, index: int) -> int:
    """Deterministic per-point seed derived from (master seed, point index)."""
    return int(np.random.SeedSequence((master_seed, index)).generate_state(1, np.uint64)[0])


def sweep(
    scenario: Scenario,
    snrs_db,
    stop: StoppingRule | None = None,
    seed: int = 0,
    model: MlpParams | None = None,
    workers: int = 1,
) -> list[BerRecord]:
    """One BerRecord per SNR point, with independent per-point substreams."""
    snrs_db = list(snrs_db)
    if not snrs_db:
        raise ConfigurationError("SNR sweep is empty")
    return [
        run_ber_point(scenario, snr, stop, point_seed(seed, i), model, workers)
        for i, snr in enumerate(snrs_db)
    ]
