"""Gray-labeled constellations and the bit <-> (antenna, symbol) mapping.

A frame carries log2(Nr) antenna bits followed by log2(M) symbol bits in
SM mode; SSK frames carry the antenna bits only and transmit a fixed unit
symbol.  Antenna bits use natural binary (MSB first); symbol bits are the
Gray label of the constellation point.  Antenna and symbol indices are
1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ShapeError

BPSK = "bpsk"
QPSK = "qpsk"
MQAM = "mqam"
SCHEMES = (BPSK, QPSK, MQAM)

MODE_SM = "sm"
MODE_SSK = "ssk"
MODES = (MODE_SM, MODE_SSK)

# SSK sends an unmodulated unit carrier; only the antenna index carries bits.
SSK_SYMBOL = 1.0 + 0.0j


@dataclass
class Constellation:
    """Ordered unit-mean-energy points with Gray bit labels.

    points[i] is the symbol whose label is labels[i]; labels enumerate all
    log2(M)-bit strings and are ordered so labels[i] == format(i, '0kb').
    """

    points: np.ndarray
    labels: tuple[str, ...]
    scheme: str
    label_values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.complex128)
        # integer value of each label, used by the vectorized bit accounting
        self.label_values = np.array([int(lab, 2) for lab in self.labels], dtype=np.int64)

    @property
    def order(self) -> int:
        return self.points.shape[0]

    @property
    def bits_per_symbol(self) -> int:
        return len(self.labels[0])


@dataclass
class Frame:
    """One transmission: selected receive antenna m and symbol index n (1-based)."""

    antenna: int
    symbol: int = 1


def _gray_to_offset(bits: str) -> int:
    """Decode a Gray codeword (MSB first) to its rank along the axis."""
    value = 0
    acc = 0
    for ch in bits:
        acc ^= int(ch)
        value = (value << 1) | acc
    return value


def _square_qam_points(m: int) -> np.ndarray:
    """Square Gray constellation: per-axis Gray labels, unit mean energy."""
    k = m.bit_length() - 1
    t = k // 2
    half = 1 << t
    norm = np.sqrt(2.0 * (m - 1) / 3.0)
    points = np.empty(m, dtype=np.complex128)
    for i in range(m):
        label = format(i, f"0{k}b")
        bi = _gray_to_offset(label[:t])
        bq = _gray_to_offset(label[t:])
        level_i = (half - 1) - 2 * bi
        level_q = (half - 1) - 2 * bq
        points[i] = (level_i + 1j * level_q) / norm
    return points


def build_constellation(scheme: str, m: int) -> Constellation:
    """Construct a Gray-labeled constellation of order m for the given scheme."""
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unsupported scheme {scheme!r}; expected one of {SCHEMES}")
    if scheme == BPSK:
        if m != 2:
            raise ConfigurationError(f"BPSK requires order 2, got {m}")
        points = np.array([1.0 + 0.0j, -1.0 + 0.0j])
        labels = ("0", "1")
        return Constellation(points=points, labels=labels, scheme=scheme)
    if scheme == QPSK and m != 4:
        raise ConfigurationError(f"QPSK requires order 4, got {m}")
    if scheme == MQAM and m not in (4, 16, 64):
        raise ConfigurationError(
            f"square QAM supports orders 4, 16, 64; got {m}"
        )
    k = m.bit_length() - 1
    labels = tuple(format(i, f"0{k}b") for i in range(m))
    return Constellation(points=_square_qam_points(m), labels=labels, scheme=scheme)


def _antenna_bit_count(nr: int) -> int:
    if nr < 1 or nr & (nr - 1):
        raise ConfigurationError(f"antenna count must be a power of two, got {nr}")
    return nr.bit_length() - 1


def frame_bit_count(nr: int, c: Constellation | None, mode: str) -> int:
    """Bits carried per frame: log2(Nr) plus log2(M) in SM mode."""
    if mode not in MODES:
        raise ConfigurationError(f"unsupported mode {mode!r}; expected one of {MODES}")
    k = _antenna_bit_count(nr)
    if mode == MODE_SM:
        if c is None:
            raise ConfigurationError("SM mode requires a constellation")
        k += c.bits_per_symbol
    return k


def bits_to_frame(bits: str, nr: int, c: Constellation | None, mode: str) -> Frame:
    """Map an information bit string to a frame.

    The first log2(Nr) bits select the antenna (natural binary, MSB first);
    the rest select the symbol whose Gray label matches.
    """
    expected = frame_bit_count(nr, c, mode)
    if len(bits) != expected or any(ch not in "01" for ch in bits):
        raise ShapeError(
            f"expected {expected} bits for nr={nr} mode={mode}, got {bits!r}"
        )
    k1 = _antenna_bit_count(nr)
    antenna = 1 + (int(bits[:k1], 2) if k1 else 0)
    if mode == MODE_SSK:
        return Frame(antenna=antenna, symbol=1)
    label = bits[k1:]
    try:
        symbol = 1 + c.labels.index(label)
    except ValueError:  # pragma: no cover - labels enumerate all strings
        raise ShapeError(f"no constellation point labeled {label!r}")
    return Frame(antenna=antenna, symbol=symbol)


def frame_to_bits(f: Frame, nr: int, c: Constellation | None, mode: str) -> str:
    """Exact inverse of :func:`bits_to_frame`."""
    if mode not in MODES:
        raise ConfigurationError(f"unsupported mode {mode!r}; expected one of {MODES}")
    k1 = _antenna_bit_count(nr)
    if not 1 <= f.antenna <= nr:
        raise IndexError(f"antenna index {f.antenna} out of range 1..{nr}")
    bits = format(f.antenna - 1, f"0{k1}b") if k1 else ""
    if mode == MODE_SM:
        if c is None:
            raise ConfigurationError("SM mode requires a constellation")
        if not 1 <= f.symbol <= c.order:
            raise IndexError(f"symbol index {f.symbol} out of range 1..{c.order}")
        bits += c.labels[f.symbol - 1]
    return bits
