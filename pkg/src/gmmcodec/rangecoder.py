"""Integer range coder over the 512-symbol alphabet.

The coder keeps a 64-bit (low, range) pair and renormalizes byte-wise, so
identical inputs produce byte-identical streams on every platform. Symbol
probabilities come as integer cumulative-frequency tables with a fixed total
of 2^16; every symbol is guaranteed a frequency of at least 1 so the decoder
can always resolve the full alphabet.

Carries are propagated directly into the already-emitted bytes. This is safe
because every coding step nests the new interval inside the old one, so the
running value (emitted bytes, then low) can never overflow past an all-0xFF
prefix.

The flush writes the two bytes that pin a multiple of 2^48 inside the final
interval; the six missing low-order bytes are implicitly zero. The decoder
therefore reads up to 8 bytes past the payload end, substituting zeros, and
only treats reads beyond that grace window as truncation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDistribution, InvalidSymbol, TruncatedStream
from .gmm import ALPHABET_SIZE, SYMBOL_HI, SYMBOL_LO

FREQ_BITS = 16
FREQ_TOTAL = 1 << FREQ_BITS  # 65536

_MASK64 = (1 << 64) - 1
_RENORM = 1 << 48  # renormalize while range < 2^48, keeping range // 2^16 >= 2^32
_TOP_BYTE_SHIFT = 56
_GRACE_BYTES = 8

PMF_SUM_TOL = 1e-6


@dataclass(frozen=True)
class QuantizedCdf:
    """Integer cumulative-frequency table over the 512-symbol alphabet.

    freq has 512 entries, each >= 1, summing to exactly 2^16. cum has 513
    entries with cum[0] = 0 and cum[512] = 2^16.
    """

    freq: np.ndarray
    cum: np.ndarray

    def __post_init__(self):
        freq = np.asarray(self.freq, dtype=np.int64)
        cum = np.asarray(self.cum, dtype=np.int64)
        if freq.shape != (ALPHABET_SIZE,) or cum.shape != (ALPHABET_SIZE + 1,):
            raise InvalidDistribution(
                f"bad table shapes {freq.shape}/{cum.shape}"
            )
        if cum[0] != 0 or cum[-1] != FREQ_TOTAL:
            raise InvalidDistribution("cumulative table must span [0, 2^16]")
        if np.any(freq < 1):
            raise InvalidDistribution("every symbol needs frequency >= 1")
        if np.any(cum[1:] - cum[:-1] != freq):
            raise InvalidDistribution("cum is not the prefix sum of freq")
        object.__setattr__(self, "freq", freq)
        object.__setattr__(self, "cum", cum)

    @classmethod
    def from_freq(cls, freq) -> "QuantizedCdf":
        freq = np.asarray(freq, dtype=np.int64)
        cum = np.zeros(freq.size + 1, dtype=np.int64)
        np.cumsum(freq, out=cum[1:])
        return cls(freq, cum)


@dataclass(frozen=True)
class Bitstream:
    """Encoded payload. bit_length counts the information-bearing bits."""

    data: bytes
    bit_length: int

    def __post_init__(self):
        if self.bit_length > 8 * len(self.data):
            raise InvalidDistribution("bit_length exceeds the byte buffer")


def quantize_freqs(pmf):
    """Quantize probability tables to integer frequencies totaling 2^16.

    Works on one table of shape (512,) or a batch (..., 512). Each symbol
    gets floor(p * (2^16 - 512)) + 1, which can never overshoot the total;
    the remaining deficit goes to the highest-probability symbol.

    Raises:
        InvalidDistribution: entries negative, non-finite, or sum not
            within 1e-6 of 1 (this covers the all-zero table).
    """
    pmf = np.asarray(pmf, dtype=np.float64)
    if pmf.shape[-1] != ALPHABET_SIZE:
        raise InvalidDistribution(f"pmf last axis must be {ALPHABET_SIZE}")
    if not np.all(np.isfinite(pmf)) or np.any(pmf < 0.0):
        raise InvalidDistribution("pmf entries must be finite and nonnegative")
    sums = pmf.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > PMF_SUM_TOL):
        raise InvalidDistribution("pmf must sum to 1 within 1e-6")
    freq = np.floor(pmf * float(FREQ_TOTAL - ALPHABET_SIZE)).astype(np.int64) + 1
    deficit = FREQ_TOTAL - freq.sum(axis=-1)
    top = np.argmax(pmf, axis=-1)
    idx = np.indices(freq.shape[:-1], sparse=True)
    freq[(*idx, top)] += deficit
    return freq


def quantize_cdf(pmf) -> QuantizedCdf:
    """Quantize one 512-entry probability table into a QuantizedCdf."""
    pmf = np.asarray(pmf, dtype=np.float64)
    if pmf.shape != (ALPHABET_SIZE,):
        raise InvalidDistribution(f"expected shape ({ALPHABET_SIZE},), got {pmf.shape}")
    return QuantizedCdf.from_freq(quantize_freqs(pmf))


class RangeEncoder:
    """Streaming encoder; one instance per payload, not thread-safe."""

    def __init__(self):
        self._low = 0
        self._range = _MASK64
        self._out = bytearray()
        self._finished = False

    def _carry(self):
        i = len(self._out) - 1
        while self._out[i] == 0xFF:
            self._out[i] = 0
            i -= 1
        self._out[i] += 1

    def encode_index(self, index: int, cum, upper_is_total: bool):
        """Encode one symbol given its cumulative bounds.

        cum is indexable; upper_is_total marks the last alphabet slot, which
        absorbs the rounding slack of range // 2^16.
        """
        if not 0 <= index < len(cum) - 1:
            raise InvalidSymbol(f"index {index} outside cumulative table of {len(cum) - 1}")
        r = self._range >> FREQ_BITS
        lo_scaled = r * int(cum[index])
        self._low += lo_scaled
        if upper_is_total:
            self._range -= lo_scaled
        else:
            self._range = r * int(cum[index + 1] - cum[index])
        if self._low > _MASK64:
            self._carry()
            self._low &= _MASK64
        while self._range < _RENORM:
            self._out.append((self._low >> _TOP_BYTE_SHIFT) & 0xFF)
            self._low = (self._low << 8) & _MASK64
            self._range <<= 8

    def encode_symbol(self, symbol: int, cdf: QuantizedCdf):
        """Encode one alphabet symbol in [-255, 256]."""
        if self._finished:
            raise InvalidSymbol("encoder already finished")
        if not SYMBOL_LO <= symbol <= SYMBOL_HI:
            raise InvalidSymbol(f"symbol {symbol} outside [{SYMBOL_LO}, {SYMBOL_HI}]")
        index = int(symbol) - SYMBOL_LO
        self.encode_index(index, cdf.cum, index == ALPHABET_SIZE - 1)

    def finish(self) -> bytes:
        """Flush and return the payload bytes."""
        if not self._finished:
            self._finished = True
            # Round low up to a multiple of 2^48; range >= 2^48 after
            # renormalization guarantees the result stays inside the interval.
            value = (self._low + (_RENORM - 1)) & ~(_RENORM - 1)
            if value > _MASK64:
                self._carry()
                value &= _MASK64
            self._out.append((value >> 56) & 0xFF)
            self._out.append((value >> 48) & 0xFF)
        return bytes(self._out)


class RangeDecoder:
    """Streaming decoder for payloads produced by RangeEncoder.

    Initialization is lazy: a payload is only touched once the first symbol
    is requested, so a decoder over an all-skipped stream reads zero bytes.
    """

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0
        self._range = _MASK64
        self._code = 0
        self._started = False

    @property
    def bytes_consumed(self) -> int:
        """Payload bytes actually read (excluding the zero-fill grace)."""
        return min(self._pos, len(self._data))

    def _next_byte(self) -> int:
        pos = self._pos
        self._pos = pos + 1
        if pos < len(self._data):
            return self._data[pos]
        if pos - len(self._data) >= _GRACE_BYTES:
            raise TruncatedStream(
                f"needed byte {pos} of a {len(self._data)}-byte payload"
            )
        return 0

    def _start(self):
        self._started = True
        for _ in range(8):
            self._code = (self._code << 8) | self._next_byte()

    def decode_index(self, cum, last_cum: int) -> int:
        """Decode one symbol index by binary search in a cumulative table."""
        if not self._started:
            self._start()
        r = self._range >> FREQ_BITS
        target = self._code // r
        if target >= FREQ_TOTAL:
            target = FREQ_TOTAL - 1
        index = int(np.searchsorted(cum, target, side="right")) - 1
        lo_scaled = r * int(cum[index])
        self._code -= lo_scaled
        if int(cum[index + 1]) == last_cum:
            self._range -= lo_scaled
        else:
            self._range = r * int(cum[index + 1] - cum[index])
        while self._range < _RENORM:
            self._code = ((self._code << 8) | self._next_byte()) & _MASK64
            self._range <<= 8
        return index

    def decode_symbol(self, cdf: QuantizedCdf) -> int:
        """Decode one alphabet symbol in [-255, 256]."""
        return self.decode_index(cdf.cum, FREQ_TOTAL) + SYMBOL_LO


def _normalize_provider(cdfs):
    if callable(cdfs):
        return cdfs
    seq = list(cdfs)
    return lambda prefix: seq[len(prefix)]


def encode(symbols, cdfs) -> Bitstream:
    """Encode a symbol sequence against per-position probability tables.

    Args:
        symbols: iterable of alphabet symbols in [-255, 256].
        cdfs: either a sequence of QuantizedCdf (static) or a callable
            mapping the already-encoded prefix (a list of symbols) to the
            next QuantizedCdf (adaptive).

    Returns:
        Bitstream whose bit_length is the quantized cross-entropy rounded up.
    """
    provider = _normalize_provider(cdfs)
    enc = RangeEncoder()
    prefix: list[int] = []
    info_bits = 0.0
    for symbol in symbols:
        cdf = provider(prefix)
        enc.encode_symbol(symbol, cdf)
        info_bits += FREQ_BITS - float(np.log2(cdf.freq[int(symbol) - SYMBOL_LO]))
        prefix.append(int(symbol))
    data = enc.finish()
    return Bitstream(data, min(int(np.ceil(info_bits)), 8 * len(data)))


def decode(stream, cdfs, n: int) -> list[int]:
    """Decode n symbols; inverse of encode given the same provider.

    Raises:
        TruncatedStream: if the payload is too short by more than the
            8-byte flush grace.
    """
    data = stream.data if isinstance(stream, Bitstream) else bytes(stream)
    provider = _normalize_provider(cdfs)
    dec = RangeDecoder(data)
    out: list[int] = []
    for _ in range(n):
        out.append(dec.decode_symbol(provider(out)))
    return out
