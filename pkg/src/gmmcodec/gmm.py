"""Discretized Gaussian mixture likelihoods over the fixed integer symbol alphabet.

Each latent element is modeled by a K-component Gaussian mixture. The
probability of an integer symbol is the mixture CDF evaluated at the two
half-integer boundaries around it:

    p(s) = sum_k w_k * (C_k(s + 1/2) - C_k(s - 1/2))

with two edge substitutions that make the 512 probabilities a true
distribution: the lower CDF term is forced to 0 at the alphabet minimum and
the upper term is forced to 1 at the alphabet maximum.

All evaluation is float64. The standard normal CDF uses a complementary
error function formulation, which keeps absolute error around 1e-16 near the
center and saturates cleanly in the tails.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .errors import InvalidInput, InvalidSymbol, ShapeError

# Fixed codec-wide symbol alphabet. Never configurable per stream.
SYMBOL_LO = -255
SYMBOL_HI = 256
ALPHABET_SIZE = SYMBOL_HI - SYMBOL_LO + 1  # 512

# Scales below this are clamped before CDF evaluation so no mixture collapses
# into a spike narrower than the integer lattice.
SIGMA_FLOOR = 0.01

# Probabilities are floored here before rate computation so -log2 stays finite.
# The range coder applies its own integer frequency floor independently.
MIN_PMF = 2.0 ** -40

_NEG_INV_SQRT2 = -(2.0 ** -0.5)

# Half-integer boundaries between adjacent symbols: -255.5, -254.5, ..., 256.5.
# Entries 0 and 512 are placeholders; the edge rules overwrite them.
_BOUNDS = SYMBOL_LO - 0.5 + np.arange(ALPHABET_SIZE + 1, dtype=np.float64)

WEIGHT_SUM_TOL = 1e-9


def std_normal_cdf(x):
    """Standard normal CDF, elementwise on scalars or arrays."""
    return 0.5 * erfc(_NEG_INV_SQRT2 * np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class GmmParams:
    """Mixture parameters for a single latent element.

    Weights must already be normalized (softmax output). Scales are clamped
    to SIGMA_FLOOR at construction.
    """

    weights: np.ndarray
    means: np.ndarray
    scales: np.ndarray
    k: int = field(init=False)

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        m = np.atleast_1d(np.asarray(self.means, dtype=np.float64))
        s = np.atleast_1d(np.asarray(self.scales, dtype=np.float64))
        if not (w.shape == m.shape == s.shape) or w.ndim != 1 or w.size < 1:
            raise ShapeError(
                f"weights/means/scales must be equal-length 1-D, got "
                f"{w.shape}/{m.shape}/{s.shape}"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(m)) and np.all(np.isfinite(s))):
            raise InvalidInput("mixture parameters must be finite")
        if np.any(w < 0.0):
            raise InvalidInput("mixture weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidInput(f"mixture weights sum to {w.sum()!r}, expected 1")
        s = np.maximum(s, SIGMA_FLOOR)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "scales", s)
        object.__setattr__(self, "k", w.size)


@dataclass(frozen=True)
class GmmParamTensor:
    """Per-element mixture parameters for a full latent tensor.

    Arrays are shaped (K, C, H, W) and aligned element-for-element with the
    (C, H, W) latent they model. Scales are clamped to SIGMA_FLOOR.
    """

    weights: np.ndarray
    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        m = np.asarray(self.means, dtype=np.float64)
        s = np.asarray(self.scales, dtype=np.float64)
        if not (w.shape == m.shape == s.shape) or w.ndim != 4:
            raise ShapeError(
                f"parameter arrays must share one (K, C, H, W) shape, got "
                f"{w.shape}/{m.shape}/{s.shape}"
            )
        sums = w.sum(axis=0)
        if w.size and float(np.max(np.abs(sums - 1.0))) > WEIGHT_SUM_TOL:
            raise InvalidInput("per-element mixture weights must sum to 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "scales", np.maximum(s, SIGMA_FLOOR))

    @property
    def k(self):
        return self.weights.shape[0]

    @property
    def shape(self):
        """Shape (C, H, W) of the latent tensor being modeled."""
        return self.weights.shape[1:]

    def at(self, c, y, x) -> GmmParams:
        """Mixture parameters of one element."""
        return GmmParams(
            self.weights[:, c, y, x], self.means[:, c, y, x], self.scales[:, c, y, x]
        )


def quantize_latent(y):
    """Round to nearest integer, half away from zero, then clamp to the alphabet.

    Args:
        y: real-valued array of any shape.

    Returns:
        int32 array of the same shape with values in [-255, 256].

    Raises:
        InvalidInput: if any element is non-finite.
    """
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise InvalidInput("latent values must be finite")
    rounded = np.copysign(np.floor(np.abs(y) + 0.5), y)
    return np.clip(rounded, SYMBOL_LO, SYMBOL_HI).astype(np.int32)


def _weighted_pmf(weights, cdf_hi, cdf_lo):
    """sum_k w_k * max(C_k(hi) - C_k(lo), 0), accumulated mixture by mixture.

    The explicit k-loop fixes the float accumulation order so that encoder
    and decoder, batching differently, still produce identical probabilities.
    """
    acc = np.zeros(np.broadcast_shapes(cdf_hi.shape[1:], weights.shape[1:]), dtype=np.float64)
    for k in range(weights.shape[0]):
        acc = acc + weights[k] * np.maximum(cdf_hi[k] - cdf_lo[k], 0.0)
    return acc


def pmf_tables(weights, means, scales):
    """Full 512-entry probability tables for a batch of mixtures.

    Args:
        weights, means, scales: arrays of shape (K, ...) sharing trailing dims.

    Returns:
        float64 array of shape (..., 512); entry j is the probability of
        symbol -255 + j. Each table sums to 1 up to float rounding.
    """
    w = np.asarray(weights, dtype=np.float64)
    m = np.asarray(means, dtype=np.float64)[..., None]
    s = np.maximum(np.asarray(scales, dtype=np.float64), SIGMA_FLOOR)[..., None]
    cdf = std_normal_cdf((_BOUNDS - m) / s)  # (K, ..., 513)
    cdf[..., 0] = 0.0  # lower edge: C(-inf) substitution at symbol -255
    cdf[..., -1] = 1.0  # upper edge: C(+inf) substitution at symbol 256
    return _weighted_pmf(w[..., None], cdf[..., 1:], cdf[..., :-1])


def pmf_table(params: GmmParams):
    """Probability table of the full alphabet for one element."""
    return pmf_tables(params.weights, params.means, params.scales)


def discretized_pmf(symbol: int, params: GmmParams) -> float:
    """Probability of one integer symbol under one mixture.

    Raises:
        InvalidSymbol: if symbol lies outside [-255, 256].
    """
    if not SYMBOL_LO <= symbol <= SYMBOL_HI:
        raise InvalidSymbol(f"symbol {symbol} outside [{SYMBOL_LO}, {SYMBOL_HI}]")
    return float(pmf_table(params)[int(symbol) - SYMBOL_LO])


def pmf_at_symbols(symbols, weights, means, scales):
    """Probability of each observed symbol, elementwise.

    Args:
        symbols: integer array, values in [-255, 256].
        weights, means, scales: (K, *symbols.shape) mixture parameters.

    Returns:
        float64 array shaped like ``symbols``.
    """
    sym = np.asarray(symbols)
    if np.any(sym < SYMBOL_LO) or np.any(sym > SYMBOL_HI):
        raise InvalidSymbol("symbol outside the alphabet")
    s = sym.astype(np.float64)
    w = np.asarray(weights, dtype=np.float64)
    m = np.asarray(means, dtype=np.float64)
    sc = np.maximum(np.asarray(scales, dtype=np.float64), SIGMA_FLOOR)
    hi = std_normal_cdf((s + 0.5 - m) / sc)
    lo = std_normal_cdf((s - 0.5 - m) / sc)
    hi = np.where(sym == SYMBOL_HI, 1.0, hi)
    lo = np.where(sym == SYMBOL_LO, 0.0, lo)
    return _weighted_pmf(w, hi, lo)


def estimate_rate_bits(latents, params: GmmParamTensor) -> float:
    """Cross-entropy rate estimate: sum of -log2 p(symbol) over all elements.

    Probabilities are floored at MIN_PMF so the result is always finite.

    Raises:
        ShapeError: if the latent shape does not match the parameter tensor.
    """
    latents = np.asarray(latents)
    if latents.shape != params.shape:
        raise ShapeError(f"latents {latents.shape} vs params {params.shape}")
    p = pmf_at_symbols(latents, params.weights, params.means, params.scales)
    return float(np.sum(-np.log2(np.maximum(p, MIN_PMF))))
