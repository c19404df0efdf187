"""Block-DNN detector: feature extraction, a from-scratch MLP, and training.

One fully connected ReLU/softmax classifier (trained with plain SGD on
cross-entropy) is shared across all antenna-hypothesis blocks.  Each block
feeds the classifier the interleaved real/imaginary parts of the received
vector and of that hypothesis' effective channel; the antenna is then
chosen by the smallest reconstruction residual.  Class labels, like symbol
indices everywhere else, are 1-based.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .channel import hypothesis_gains, sample_channel_batch, ChannelRealization
from .errors import ConfigurationError, FormatError, ParameterError, ShapeError
from .modulation import (
    MODE_SM,
    MODE_SSK,
    MODES,
    SSK_SYMBOL,
    Constellation,
    build_constellation,
)

FEATURE_SIGNED = "signed"
FEATURE_ABS = "abs"
FEATURE_MODES = (FEATURE_SIGNED, FEATURE_ABS)

HIDDEN_LAYERS = {
    "bpsk": (128, 64, 32),
    "qpsk": (256, 128, 64),
    "mqam": (512, 256, 128),
}

DEFAULT_QAM_ORDER = 16
PROB_FLOOR = 1e-12

_MODEL_MAGIC = "rislink-model"
_MODEL_VERSION = 1


@dataclass
class MlpParams:
    """Layered weights W[l] of shape (d_l, d_{l-1}) and biases b[l] of length d_l."""

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "MlpParams":
        return MlpParams(
            layer_sizes=list(self.layer_sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass
class TrainingConfig:
    """Optimizer and dataset settings for one training run."""

    learning_rate: float = 0.005
    epochs: int = 50
    batch_size: int = 64
    dataset_size: int = 200_000
    snr_range_db: tuple[float, float] = (-30.0, -10.0)
    seed: int = 0
    feature_mode: str = FEATURE_SIGNED

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise ConfigurationError(f"learning rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch size must be >= 1, got {self.batch_size}")
        if self.feature_mode not in FEATURE_MODES:
            raise ConfigurationError(f"unknown feature mode {self.feature_mode!r}")


@dataclass
class LabeledExample:
    """One training pair: feature vector of length 4*Nr and symbol class in 1..M."""

    features: np.ndarray
    label: int


@dataclass
class ModelMeta:
    """Scenario header persisted alongside the weights."""

    scheme: str
    nr: int
    n: int
    feature_mode: str
    layer_sizes: list[int]


def sfvg(v, mode: str = FEATURE_SIGNED) -> np.ndarray:
    """Interleave real and imaginary parts of a complex vector.

    ``abs`` mode additionally takes the modulus of every component, which
    erases signs (antipodal symbols become indistinguishable); ``signed``
    keeps them.
    """
    if mode not in FEATURE_MODES:
        raise ConfigurationError(f"unknown feature mode {mode!r}")
    v = np.asarray(v, dtype=np.complex128)
    if v.ndim != 1 or v.shape[0] < 1:
        raise ShapeError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    out = np.empty(2 * v.shape[0], dtype=np.float64)
    out[0::2] = v.real
    out[1::2] = v.imag
    if mode == FEATURE_ABS:
        np.abs(out, out=out)
    return out


def block_features(y, h, scale: float, mode: str = FEATURE_SIGNED) -> np.ndarray:
    """Classifier input for one block: [sfvg(y/scale), sfvg(h/scale)], length 4*Nr."""
    y = np.asarray(y, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    if y.shape != h.shape:
        raise ShapeError(f"received {y.shape} and channel {h.shape} lengths differ")
    if scale <= 0.0:
        raise ParameterError(f"feature scale must be positive, got {scale}")
    return np.concatenate([sfvg(y / scale, mode), sfvg(h / scale, mode)])


def _sfvg_batch(v: np.ndarray) -> np.ndarray:
    """Signed interleave along the last axis: (..., L) complex -> (..., 2L) real."""
    out = np.empty(v.shape[:-1] + (2 * v.shape[-1],), dtype=np.float64)
    out[..., 0::2] = v.real
    out[..., 1::2] = v.imag
    return out


# ---------------------------------------------------------------------------
# MLP forward / backward
# ---------------------------------------------------------------------------


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_batch(p: MlpParams, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Returns the post-activation of every layer (input included) and the probabilities."""
    acts = [x]
    z = x
    for w, b in zip(p.weights[:-1], p.biases[:-1]):
        z = np.maximum(z @ w.T + b, 0.0)
        acts.append(z)
    logits = z @ p.weights[-1].T + p.biases[-1]
    return acts, _softmax_rows(logits)


def mlp_forward(p: MlpParams, z0) -> np.ndarray:
    """Class probabilities for one input vector (ReLU hidden layers, softmax output)."""
    z0 = np.asarray(z0, dtype=np.float64)
    if z0.ndim != 1 or z0.shape[0] != p.layer_sizes[0]:
        raise ShapeError(f"input must have length {p.layer_sizes[0]}, got shape {z0.shape}")
    _, probs = _forward_batch(p, z0[None, :])
    return probs[0]


def cross_entropy_loss(probs, label: int) -> float:
    """Negative log-probability of the 1-based class, floored at 1e-12 before the log."""
    probs = np.asarray(probs, dtype=np.float64)
    if not 1 <= label <= probs.shape[0]:
        raise IndexError(f"label {label} out of range 1..{probs.shape[0]}")
    return float(-np.log(max(probs[label - 1], PROB_FLOOR)))


def _backward_batch(
    p: MlpParams, x: np.ndarray, labels0: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Mean-over-batch gradients and the per-example losses.

    labels0 are 0-based class indices.  ReLU's subgradient at 0 is 0.
    """
    acts, probs = _forward_batch(p, x)
    b = x.shape[0]
    rows = np.arange(b)
    losses = -np.log(np.maximum(probs[rows, labels0], PROB_FLOOR))
    delta = probs.copy()
    delta[rows, labels0] -= 1.0
    delta /= b
    grad_w = [None] * len(p.weights)
    grad_b = [None] * len(p.biases)
    for layer in range(len(p.weights) - 1, -1, -1):
        grad_w[layer] = delta.T @ acts[layer]
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ p.weights[layer]) * (acts[layer] > 0.0)
    return grad_w, grad_b, losses


def mlp_backward(p: MlpParams, z0, label: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Exact gradients of cross_entropy(forward(z0), label) w.r.t. weights and biases."""
    z0 = np.asarray(z0, dtype=np.float64)
    if z0.ndim != 1 or z0.shape[0] != p.layer_sizes[0]:
        raise ShapeError(f"input must have length {p.layer_sizes[0]}, got shape {z0.shape}")
    if not 1 <= label <= p.layer_sizes[-1]:
        raise IndexError(f"label {label} out of range 1..{p.layer_sizes[-1]}")
    grad_w, grad_b, _ = _backward_batch(p, z0[None, :], np.array([label - 1]))
    return grad_w, grad_b


def apply_gradient_step(p: MlpParams, grad_w, grad_b, learning_rate: float) -> None:
    """In-place update w <- w - lr * grad."""
    for w, gw in zip(p.weights, grad_w):
        w -= learning_rate * gw
    for b, gb in zip(p.biases, grad_b):
        b -= learning_rate * gb


def examples_to_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    """Stack a LabeledExample collection into (features, 0-based labels)."""
    if isinstance(data, tuple):
        x, labels = data
        return np.asarray(x, dtype=np.float64), np.asarray(labels, dtype=np.int64)
    x = np.stack([ex.features for ex in data]).astype(np.float64)
    labels = np.array([ex.label - 1 for ex in data], dtype=np.int64)
    return x, labels


def sgd_epoch(
    p: MlpParams, data, cfg: TrainingConfig, rng: np.random.Generator
) -> tuple[MlpParams, float]:
    """One pass of mini-batch SGD over shuffled data.

    Accepts a LabeledExample sequence or a pre-stacked (features, 0-based
    labels) tuple.  Returns the updated parameters and the mean per-example
    loss, measured on each mini-batch before its update.
    """
    x, labels0 = examples_to_arrays(data)
    n = x.shape[0]
    if n == 0:
        raise ConfigurationError("training data is empty")
    out = p.copy()
    order = rng.permutation(n)
    total = 0.0
    for start in range(0, n, cfg.batch_size):
        idx = order[start : start + cfg.batch_size]
        grad_w, grad_b, losses = _backward_batch(out, x[idx], labels0[idx])
        apply_gradient_step(out, grad_w, grad_b, cfg.learning_rate)
        total += losses.sum()
    return out, total / n


def build_network(
    scheme: str, nr: int, m: int | None = None, rng: np.random.Generator | None = None
) -> MlpParams:
    """Initialized classifier for a scheme: [4*Nr, hidden triple, M].

    Weights are zero-mean Gaussian with std sqrt(2/fan_in); biases start at
    zero.  ``m`` is only consulted for the QAM scheme (default 16).
    """
    if scheme not in HIDDEN_LAYERS:
        raise ConfigurationError(
            f"unsupported scheme {scheme!r}; expected one of {tuple(HIDDEN_LAYERS)}"
        )
    if scheme == "bpsk":
        out = 2
    elif scheme == "qpsk":
        out = 4
    else:
        out = DEFAULT_QAM_ORDER if m is None else m
        if out not in (4, 16, 64):
            raise ConfigurationError(f"square QAM supports orders 4, 16, 64; got {out}")
    if rng is None:
        rng = np.random.default_rng(0)
    sizes = [4 * nr, *HIDDEN_LAYERS[scheme], out]
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(layer_sizes=sizes, weights=weights, biases=biases)


# ---------------------------------------------------------------------------
# Training data and the block detector
# ---------------------------------------------------------------------------


def _true_aligned_column(
    amps: np.ndarray, phases: np.ndarray, ant0: np.ndarray
) -> np.ndarray:
    """Effective channel under the transmitted antenna's alignment, (B, Nr)."""
    ph_true = np.take_along_axis(phases, ant0[:, None, None], axis=1)
    rot = np.exp(1j * (ph_true - phases))
    return (amps * rot).sum(axis=2)


def generate_training_set(scenario, size: int, snr_range_db, rng: np.random.Generator):
    """Labeled feature vectors drawn at the true antenna hypothesis.

    Each example: SNR uniform over ``snr_range_db`` (dB of Es/N0 with
    Es = 1), an independent channel, a uniform random frame, the noisy
    received vector, features from the true aligned effective channel, and
    the transmitted symbol index as the label.  Only SM scenarios have a
    symbol classifier to train.
    """
    if size < 1:
        raise ConfigurationError(f"dataset size must be >= 1, got {size}")
    if scenario.mode != MODE_SM:
        raise ConfigurationError("training data is only defined for SM scenarios")
    const = build_constellation(scenario.scheme, scenario.m)
    inv = np.empty(const.order, dtype=np.int64)
    inv[const.label_values] = np.arange(const.order)
    lo, hi = float(snr_range_db[0]), float(snr_range_db[1])
    snr = rng.uniform(lo, hi, size=size)
    ant0 = rng.integers(0, scenario.nr, size=size)
    labval = rng.integers(0, const.order, size=size)
    amps, phases = sample_channel_batch(
        size, scenario.nr, scenario.n, scenario.alpha, scenario.omega, rng
    )
    point_idx = inv[labval]
    h = _true_aligned_column(amps, phases, ant0)
    x = const.points[point_idx]
    sigma = np.sqrt(10.0 ** (-snr / 10.0) / 2.0)
    noise = rng.standard_normal((size, scenario.nr)) + 1j * rng.standard_normal(
        (size, scenario.nr)
    )
    y = h * x[:, None] + sigma[:, None] * noise
    feats = np.concatenate(
        [_sfvg_batch(y / scenario.n), _sfvg_batch(h / scenario.n)], axis=1
    )
    if scenario.feature_mode == FEATURE_ABS:
        np.abs(feats, out=feats)
    elif scenario.feature_mode != FEATURE_SIGNED:
        raise ConfigurationError(f"unknown feature mode {scenario.feature_mode!r}")
    return [
        LabeledExample(features=feats[i], label=int(point_idx[i]) + 1)
        for i in range(size)
    ]


def train_network(scenario, cfg: TrainingConfig) -> tuple[MlpParams, list[float]]:
    """Generate a training set and run the full SGD schedule.

    Returns the trained parameters and the per-epoch mean losses; fully
    deterministic given ``cfg.seed``.
    """
    if cfg.feature_mode != scenario.feature_mode:
        raise ConfigurationError(
            f"feature mode mismatch: config {cfg.feature_mode!r} vs scenario "
            f"{scenario.feature_mode!r}"
        )
    rng = np.random.default_rng(cfg.seed)
    examples = generate_training_set(scenario, cfg.dataset_size, cfg.snr_range_db, rng)
    params = build_network(scenario.scheme, scenario.nr, scenario.m, rng)
    data = examples_to_arrays(examples)
    losses = []
    for _ in range(cfg.epochs):
        params, loss = sgd_epoch(params, data, cfg, rng)
        losses.append(loss)
    return params, losses


def bdnn_decide_batch(
    y: np.ndarray,
    hyp: np.ndarray,
    p: MlpParams | None,
    points: np.ndarray,
    scale: float,
    feature_mode: str,
    mode: str,
    classifier=None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Blockwise symbol classification followed by minimum-residual antenna choice.

    y:   (B, Nr) received vectors, hyp: (B, Nr, K) hypothesis channels.
    For each block i the shared classifier picks a symbol from the block's
    features; the antenna is the block whose reconstruction y - h_i * x_i
    has the smallest squared norm.  SSK skips the classifier (fixed unit
    symbol), which makes the rule coincide with joint minimum-residual
    detection.  ``classifier`` overrides the network: a callable mapping a
    feature matrix to 1-based class indices (testing hook).
    """
    b, _, k = hyp.shape
    rows = np.arange(b)
    if mode == MODE_SSK:
        diff = y[:, :, None] - hyp * SSK_SYMBOL
        resid = (diff.real**2 + diff.imag**2).sum(axis=1)
        ant = resid.argmin(axis=1)
        return ant + 1, np.ones(b, dtype=np.int64), resid[rows, ant]
    feats = np.concatenate(
        [
            np.broadcast_to(_sfvg_batch(y / scale)[:, None, :], (b, k, 2 * y.shape[1])),
            _sfvg_batch(np.swapaxes(hyp, 1, 2) / scale),
        ],
        axis=2,
    )
    if feature_mode == FEATURE_ABS:
        feats = np.abs(feats)
    flat = feats.reshape(b * k, -1)
    if classifier is not None:
        cls = np.asarray(classifier(flat), dtype=np.int64).reshape(b, k)
    else:
        _, probs = _forward_batch(p, flat)
        cls = probs.argmax(axis=1).reshape(b, k) + 1
    xhat = points[cls - 1]
    diff = y[:, :, None] - hyp * xhat[:, None, :]
    resid = (diff.real**2 + diff.imag**2).sum(axis=1)
    ant = resid.argmin(axis=1)
    return ant + 1, cls[rows, ant], resid[rows, ant]


def bdnn_detect(
    y,
    channel: ChannelRealization,
    p: MlpParams | None,
    c: Constellation | None,
    mode: str = MODE_SM,
    feature_mode: str = FEATURE_SIGNED,
    classifier=None,
) -> "DetectionResult":
    """Block-DNN detection of one received vector.

    Runs one block per aligned-antenna hypothesis with shared weights; the
    feature scale is the reflector count.  ``p`` may be None for SSK or
    when a ``classifier`` hook is supplied.
    """
    from .detectors import DetectionResult, _check_received, _detector_points

    y = _check_received(y, channel)
    points = _detector_points(c, mode)
    if mode == MODE_SM and classifier is None:
        if p is None:
            raise ConfigurationError("SM block detection requires trained parameters")
        if p.layer_sizes[0] != 4 * channel.nr:
            raise ShapeError(
                f"network input width {p.layer_sizes[0]} != 4*Nr = {4 * channel.nr}"
            )
        if p.layer_sizes[-1] != points.shape[0]:
            raise ShapeError(
                f"network output width {p.layer_sizes[-1]} != constellation order "
                f"{points.shape[0]}"
            )
    hyp = hypothesis_gains(channel)
    ant, sym, metric = bdnn_decide_batch(
        y[None, :], hyp[None, :, :], p, points, float(channel.n),
        feature_mode, mode, classifier,
    )
    return DetectionResult(antenna=int(ant[0]), symbol=int(sym[0]), metric=float(metric[0]))


# ---------------------------------------------------------------------------
# Model persistence
# ---------------------------------------------------------------------------


def save_model(
    p: MlpParams, path, *, scheme: str, nr: int, n: int, feature_mode: str
) -> None:
    """Write a versioned model container: header line, JSON meta, raw arrays."""
    meta = {
        "scheme": scheme,
        "nr": int(nr),
        "n": int(n),
        "feature_mode": feature_mode,
        "layer_sizes": [int(s) for s in p.layer_sizes],
    }
    with open(path, "wb") as fh:
        fh.write(f"{_MODEL_MAGIC} v{_MODEL_VERSION}\n".encode())
        fh.write(json.dumps(meta, sort_keys=True).encode() + b"\n")
        for w, b in zip(p.weights, p.biases):
            np.save(fh, np.ascontiguousarray(w, dtype=np.float64))
            np.save(fh, np.ascontiguousarray(b, dtype=np.float64))


def load_model(path) -> tuple[MlpParams, ModelMeta]:
    """Read a model container back; raises FormatError on any damage."""
    with open(path, "rb") as fh:
        header = fh.readline().decode(errors="replace").strip()
        if not header.startswith(_MODEL_MAGIC):
            raise FormatError(f"not a model file: bad magic {header!r}")
        version = header[len(_MODEL_MAGIC) :].strip()
        if version != f"v{_MODEL_VERSION}":
            raise FormatError(
                f"model format version mismatch: expected v{_MODEL_VERSION}, "
                f"found {version or '<missing>'}"
            )
        try:
            meta_raw = json.loads(fh.readline().decode())
            sizes = [int(s) for s in meta_raw["layer_sizes"]]
            meta = ModelMeta(
                scheme=meta_raw["scheme"],
                nr=int(meta_raw["nr"]),
                n=int(meta_raw["n"]),
                feature_mode=meta_raw["feature_mode"],
                layer_sizes=sizes,
            )
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise FormatError(f"corrupt model header: {exc}") from exc
        weights = []
        biases = []
        try:
            for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
                w = np.load(fh, allow_pickle=False)
                b = np.load(fh, allow_pickle=False)
                if w.shape != (fan_out, fan_in) or b.shape != (fan_out,):
                    raise FormatError(
                        f"layer shape mismatch: got {w.shape}/{b.shape}, "
                        f"expected ({fan_out}, {fan_in})/({fan_out},)"
                    )
                weights.append(w)
                biases.append(b)
        except FormatError:
            raise
        except Exception as exc:
            raise FormatError(f"truncated or corrupt model file: {exc}") from exc
    return MlpParams(layer_sizes=sizes, weights=weights, biases=biases), meta
