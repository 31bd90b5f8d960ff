"""Autoregressive context model over the quantized latent tensor.

A spatially causal 5x5 masked convolution summarizes already-coded
neighbors; a two-layer 1x1 head turns that summary plus the hyper features
into per-element mixture parameters (weights, means, scales).

Encoder and decoder compute these parameters on different schedules: the
encoder over the whole tensor at once, the decoder one position at a time as
symbols arrive. Both must land on bit-identical floats or the range coder
desynchronizes. Every accumulation here therefore runs as an explicit
Python loop of elementwise numpy operations in one documented order --
kernel row, kernel column, then input channel for the convolution; input
feature index for the 1x1 layers; mixture index for the softmax -- so each
output element sees the same IEEE operation sequence on both sides. Keep it
that way: swapping a loop for einsum/BLAS silently changes rounding.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ModelMismatch, ShapeError
from .gmm import (
    ALPHABET_SIZE,
    SIGMA_FLOOR,
    SYMBOL_LO,
    GmmParamTensor,
    estimate_rate_bits,
    pmf_tables,
)
from .rangecoder import FREQ_TOTAL, RangeDecoder, RangeEncoder, quantize_freqs

CTX_KERNEL = 5
CTX_PAD = CTX_KERNEL // 2


def causal_mask(size: int = CTX_KERNEL) -> np.ndarray:
    """Boolean (size, size) mask of taps strictly before the raster center.

    True for every position in rows above the center and for positions left
    of the center in its own row; the center itself and everything after it
    are False.
    """
    mask = np.zeros((size, size), dtype=bool)
    center = size // 2
    mask[:center, :] = True
    mask[center, :center] = True
    return mask


_MASK = causal_mask()
_TAPS = [(r, c) for r in range(CTX_KERNEL) for c in range(CTX_KERNEL) if _MASK[r, c]]


@dataclass(frozen=True)
class MaskedConvWeights:
    """Causal 5x5 convolution weights, (out, in, 5, 5) kernel plus bias.

    Construction rejects kernels with any non-zero tap outside the causal
    mask; decoding with such a kernel would peek at symbols that have not
    been decoded yet.
    """

    kernel: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        kernel = np.asarray(self.kernel, dtype=np.float64)
        bias = np.asarray(self.bias, dtype=np.float64)
        if kernel.ndim != 4 or kernel.shape[2:] != (CTX_KERNEL, CTX_KERNEL):
            raise ShapeError(f"kernel must be (out, in, 5, 5), got {kernel.shape}")
        if bias.shape != (kernel.shape[0],):
            raise ShapeError(f"bias {bias.shape} does not match {kernel.shape[0]} outputs")
        if np.any(kernel[:, :, ~_MASK] != 0.0):
            raise ModelMismatch("context kernel has non-zero taps outside the causal mask")
        # One contiguous (in, out) matrix per tap; row cin is the vector the
        # accumulation loops multiply by, shared by both compute routes.
        taps = tuple(np.ascontiguousarray(kernel[:, :, r, c].T) for r, c in _TAPS)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "_taps", taps)

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[1]


@dataclass(frozen=True)
class EntropyParamWeights:
    """Two 1x1 layers mapping context+hyper features to raw mixture outputs.

    w1: (hidden, features), relu; w2: (3*k*n, hidden), linear. Output rows
    are grouped as k*n logits, then k*n means, then k*n raw scales.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=np.float64)
        b1 = np.asarray(self.b1, dtype=np.float64)
        w2 = np.asarray(self.w2, dtype=np.float64)
        b2 = np.asarray(self.b2, dtype=np.float64)
        if w1.ndim != 2 or w2.ndim != 2 or w2.shape[1] != w1.shape[0]:
            raise ShapeError(f"layer shapes do not chain: {w1.shape} -> {w2.shape}")
        if b1.shape != (w1.shape[0],) or b2.shape != (w2.shape[0],):
            raise ShapeError("bias shapes do not match layer outputs")
        if w2.shape[0] % 3 != 0:
            raise ShapeError("output rows must come in (logit, mean, scale) triples")
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", b2)
        object.__setattr__(self, "_w1t", np.ascontiguousarray(w1.T))
        object.__setattr__(self, "_w2t", np.ascontiguousarray(w2.T))

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def in_features(self) -> int:
        return self.w1.shape[1]

    @property
    def out_features(self) -> int:
        return self.w2.shape[0]


def masked_conv_full(latents, weights: MaskedConvWeights) -> np.ndarray:
    """Context features for a whole (in, H, W) latent tensor at once.

    Zero padding of width 2 stands in for positions outside the tensor.
    """
    latents = np.asarray(latents, dtype=np.float64)
    if latents.ndim != 3 or latents.shape[0] != weights.in_channels:
        raise ShapeError(f"latents {latents.shape} do not fit kernel {weights.kernel.shape}")
    n, h, w = latents.shape
    padded = np.zeros((n, h + 2 * CTX_PAD, w + 2 * CTX_PAD), dtype=np.float64)
    padded[:, CTX_PAD : CTX_PAD + h, CTX_PAD : CTX_PAD + w] = latents
    out = np.zeros((weights.out_channels, h, w), dtype=np.float64)
    for tap, (r, c) in zip(weights._taps, _TAPS):
        window = padded[:, r : r + h, c : c + w]
        for cin in range(n):
            out += tap[cin][:, None, None] * window[cin][None, :, :]
    out += weights.bias[:, None, None]
    return out


def window_extract(partial, pos) -> np.ndarray:
    """The causal 5x5 neighborhood of one position, (in, 5, 5) float64.

    Entries outside the tensor are zero, as are all non-causal positions
    (the center and everything at or after it in raster order), so the
    window looks the same whether partial holds only already-decoded
    symbols or the finished tensor. pos outside the grid raises IndexError.
    """
    partial = np.asarray(partial, dtype=np.float64)
    if partial.ndim != 3:
        raise ShapeError(f"partial tensor must be (in, H, W), got {partial.shape}")
    y, x = pos
    n, h, w = partial.shape
    if not (0 <= y < h and 0 <= x < w):
        raise IndexError(f"position {pos} outside {h}x{w} grid")
    out = np.zeros((n, CTX_KERNEL, CTX_KERNEL), dtype=np.float64)
    r0, r1 = max(0, y - CTX_PAD), min(h, y + CTX_PAD + 1)
    c0, c1 = max(0, x - CTX_PAD), min(w, x + CTX_PAD + 1)
    out[:, r0 - y + CTX_PAD : r1 - y + CTX_PAD, c0 - x + CTX_PAD : c1 - x + CTX_PAD] = (
        partial[:, r0:r1, c0:c1]
    )
    out[:, ~_MASK] = 0.0
    return out


def masked_conv_window(window, weights: MaskedConvWeights) -> np.ndarray:
    """Context features for one extracted (in, 5, 5) window.

    Accumulation order matches masked_conv_full element for element, so for
    every position masked_conv_window(window_extract(y, pos)) equals the
    full-tensor output at pos exactly.
    """
    acc = np.zeros(weights.out_channels, dtype=np.float64)
    n = weights.in_channels
    for tap, (r, c) in zip(weights._taps, _TAPS):
        column = window[:, r, c]
        for cin in range(n):
            acc = acc + tap[cin] * column[cin]
    return acc + weights.bias


def masked_conv_at(padded, weights: MaskedConvWeights, y: int, x: int) -> np.ndarray:
    """Context features for one position of an already padded latent buffer.

    padded is (in, H+4, W+4) with the live tensor starting at [2, 2]; (y, x)
    indexes the unpadded grid. The 5x5 slice is a view, so this is
    masked_conv_window without the copy; masked taps never read the
    non-causal entries the view exposes.
    """
    return masked_conv_window(
        padded[:, y : y + CTX_KERNEL, x : x + CTX_KERNEL], weights
    )


def _linear_full(wt, bias, feat):
    """(out, H, W) = W @ feat + b with a sequential input-feature loop."""
    out = np.zeros((wt.shape[1],) + feat.shape[1:], dtype=np.float64)
    for i in range(wt.shape[0]):
        out += wt[i][:, None, None] * feat[i][None, :, :]
    out += bias[:, None, None]
    return out


def _linear_vec(wt, bias, feat):
    acc = np.zeros(wt.shape[1], dtype=np.float64)
    for i in range(wt.shape[0]):
        acc = acc + wt[i] * feat[i]
    return acc + bias


def _mixture_from_raw(raw):
    """Split raw (3, K, N, ...) head output into weights/means/scales.

    Weights are a softmax over the mixture axis with the max subtracted
    first and the denominator accumulated mixture by mixture; scales go
    through softplus and the scale floor.
    """
    logits = raw[0]
    peak = np.max(logits, axis=0)
    e = np.exp(logits - peak)
    denom = np.zeros_like(peak)
    for k in range(e.shape[0]):
        denom = denom + e[k]
    weights = e / denom
    scales = np.maximum(np.logaddexp(0.0, raw[2]), SIGMA_FLOOR)
    return weights, raw[1], scales


def entropy_params_full(ctx_feat, hyper_feat, ep: EntropyParamWeights, k: int, n: int):
    """Mixture parameters for every element of the latent grid.

    Args:
        ctx_feat: (cctx, H, W) masked-convolution output.
        hyper_feat: (ch, H, W) hyper features on the same grid.
        k, n: mixture count and latent channel count; 3*k*n must equal the
            head's output width.

    Returns:
        (weights, means, scales), each (K, N, H, W) float64.
    """
    if ctx_feat.shape[1:] != hyper_feat.shape[1:]:
        raise ShapeError(f"feature grids differ: {ctx_feat.shape} vs {hyper_feat.shape}")
    if ep.out_features != 3 * k * n:
        raise ModelMismatch(f"head width {ep.out_features} != 3*{k}*{n}")
    feat = np.concatenate([ctx_feat, hyper_feat], axis=0)
    if feat.shape[0] != ep.in_features:
        raise ModelMismatch(f"head expects {ep.in_features} features, got {feat.shape[0]}")
    hidden = np.maximum(_linear_full(ep._w1t, ep.b1, feat), 0.0)
    raw = _linear_full(ep._w2t, ep.b2, hidden)
    return _mixture_from_raw(raw.reshape(3, k, n, *feat.shape[1:]))


def entropy_params_at(ctx_vec, hyper_vec, ep: EntropyParamWeights, k: int, n: int):
    """Mixture parameters for one grid position; returns (K, N) triples."""
    feat = np.concatenate([ctx_vec, hyper_vec])
    hidden = np.maximum(_linear_vec(ep._w1t, ep.b1, feat), 0.0)
    raw = _linear_vec(ep._w2t, ep.b2, hidden)
    return _mixture_from_raw(raw.reshape(3, k, n))


def entropy_params(ctx_feat, hyper_feat, ep: EntropyParamWeights,
                   k: int, n: int) -> GmmParamTensor:
    """Validated mixture parameter tensor for the whole latent grid."""
    weights, means, scales = entropy_params_full(ctx_feat, hyper_feat, ep, k, n)
    return GmmParamTensor(weights, means, scales)


def zero_channel_mask(latents) -> np.ndarray:
    """Boolean (n,) mask of latent channels that are zero everywhere."""
    latents = np.asarray(latents)
    return np.all(latents == 0, axis=(1, 2))


def zero_channel_flags(latents) -> bytes:
    """Zero-channel mask packed little-endian into ceil(n/8) flag bytes.

    Channel c maps to bit (c % 8) of byte c // 8, exactly the layout the
    container header stores.
    """
    return np.packbits(zero_channel_mask(latents), bitorder="little").tobytes()


def _freq_tables(weights, means, scales):
    """Quantized frequency tables, (..., 512) int64 summing to 2^16."""
    return quantize_freqs(pmf_tables(weights, means, scales))


def _cum_from_freq(freq):
    cum = np.zeros(freq.shape[:-1] + (freq.shape[-1] + 1,), dtype=np.int64)
    np.cumsum(freq, axis=-1, out=cum[..., 1:])
    return cum


def _channel_chunks(channels, threads):
    per = -(-len(channels) // threads)
    return [channels[i : i + per] for i in range(0, len(channels), per)]


def encode_latents(latents, conv_w: MaskedConvWeights, ep: EntropyParamWeights,
                   k: int, hyper_feat, skip_flags, threads: int = 1):
    """Range-encode a quantized latent tensor against the context model.

    Symbols go out in raster order over grid positions with all coded
    channels emitted per position; channels flagged in skip_flags carry no
    symbols. Probability tables are built one grid row at a time, optionally
    parallelized across channel chunks -- the tables, and therefore the
    payload, do not depend on the thread count.

    Returns:
        (payload bytes, info dict) where info carries the model
        cross-entropy rate estimate, the cross-entropy under the quantized
        tables actually coded with, and the number of coded symbols.
    """
    latents = np.asarray(latents)
    n, h, w = latents.shape
    ctx = masked_conv_full(latents.astype(np.float64), conv_w)
    weights, means, scales = entropy_params_full(ctx, hyper_feat, ep, k, n)
    coded = np.flatnonzero(~np.asarray(skip_flags, dtype=bool))
    estimated = 0.0
    quantized = 0.0
    if coded.size:
        estimated = estimate_rate_bits(
            latents[coded],
            GmmParamTensor(weights[:, coded], means[:, coded], scales[:, coded]),
        )
    enc = RangeEncoder()
    if coded.size:
        sym = latents[coded].astype(np.int64) - SYMBOL_LO
        chunks = _channel_chunks(coded, max(1, int(threads)))
        pool = ThreadPoolExecutor(len(chunks)) if len(chunks) > 1 else None
        try:
            for y in range(h):
                def row_tables(chan):
                    return _freq_tables(
                        weights[:, chan, y, :], means[:, chan, y, :], scales[:, chan, y, :]
                    )
                if pool is None:
                    parts = [row_tables(chunk) for chunk in chunks]
                else:
                    parts = list(pool.map(row_tables, chunks))
                freq = np.concatenate(parts, axis=0)  # (coded, W, 512)
                hit = np.take_along_axis(freq, sym[:, y, :, None], axis=-1)[..., 0]
                quantized += float(np.sum(16.0 - np.log2(hit)))
                cum = _cum_from_freq(freq)
                for x in range(w):
                    for j in range(coded.size):
                        index = int(sym[j, y, x])
                        enc.encode_index(index, cum[j, x], index == ALPHABET_SIZE - 1)
        finally:
            if pool is not None:
                pool.shutdown()
    info = {
        "estimated_bits": float(estimated),
        "quantized_bits": float(quantized),
        "coded_symbols": int(coded.size) * h * w,
    }
    return enc.finish(), info


def decode_latents(payload: bytes, conv_w: MaskedConvWeights, ep: EntropyParamWeights,
                   k: int, hyper_feat, skip_flags) -> np.ndarray:
    """Serial decode mirroring encode_latents; returns (n, H, W) int32.

    The padded reconstruction buffer doubles as the convolution input, so
    each position's parameters are computed from exactly the symbols decoded
    so far, reproducing the encoder's floats bit for bit.
    """
    skip_flags = np.asarray(skip_flags, dtype=bool)
    n = skip_flags.size
    h, w = hyper_feat.shape[1:]
    coded = np.flatnonzero(~skip_flags)
    padded = np.zeros((n, h + 2 * CTX_PAD, w + 2 * CTX_PAD), dtype=np.float64)
    out = np.zeros((n, h, w), dtype=np.int32)
    dec = RangeDecoder(payload)
    for y in range(h):
        for x in range(w):
            if not coded.size:
                continue
            ctx_vec = masked_conv_at(padded, conv_w, y, x)
            weights, means, scales = entropy_params_at(
                ctx_vec, hyper_feat[:, y, x], ep, k, n
            )
            cum = _cum_from_freq(
                _freq_tables(weights[:, coded], means[:, coded], scales[:, coded])
            )
            for j, c in enumerate(coded):
                symbol = dec.decode_index(cum[j], FREQ_TOTAL) + SYMBOL_LO
                out[c, y, x] = symbol
                padded[c, y + CTX_PAD, x + CTX_PAD] = float(symbol)
    return out
