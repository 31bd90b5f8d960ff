"""Independent reference implementations the tests compare the package to.

Everything here deliberately takes a different computational route from the
package: math.erf instead of scipy's erfc, matrix products instead of
explicit tap loops, full 2-D sliding windows instead of separable filters.
Agreement between the two routes is then evidence rather than tautology.
"""

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# Standard normal CDF at a few points, frozen from an arbitrary-precision
# evaluation (60 digits, rounded to double).
PHI = {
    -1.0: 0.15865525393145705,
    -0.5: 0.3085375387259869,
    0.0: 0.5,
    0.5: 0.6914624612740131,
    1.0: 0.8413447460685429,
    2.0: 0.9772498680518208,
}
# Phi(1) - Phi(-1): mass of one unit-width central bin, same source.
CENTER_BIN_UNIT_SIGMA = 0.6826894921370859

SIGMA_FLOOR = 0.01
MIN_PMF = 2.0**-40


def ref_normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def ref_pmf(symbol: int, weights, means, scales) -> float:
    """Scalar mixture bin mass with the alphabet-edge substitutions."""
    total = 0.0
    for w, m, s in zip(weights, means, scales):
        s = max(float(s), SIGMA_FLOOR)
        hi = 1.0 if symbol == 256 else ref_normal_cdf((symbol + 0.5 - m) / s)
        lo = 0.0 if symbol == -255 else ref_normal_cdf((symbol - 0.5 - m) / s)
        total += float(w) * max(hi - lo, 0.0)
    return total


def ref_rate_bits(symbols, weights, means, scales) -> float:
    """Cross-entropy in bits, summed symbol by symbol in plain Python."""
    sym = np.asarray(symbols).reshape(-1)
    w = np.asarray(weights, dtype=np.float64).reshape(len(weights), -1)
    m = np.asarray(means, dtype=np.float64).reshape(len(means), -1)
    s = np.asarray(scales, dtype=np.float64).reshape(len(scales), -1)
    bits = 0.0
    for i, value in enumerate(sym):
        p = ref_pmf(int(value), w[:, i], m[:, i], s[:, i])
        bits += -math.log2(max(p, MIN_PMF))
    return bits


def make_random_mixture(rng, k: int, span: float = 270.0):
    """Random normalized mixture covering the alphabet and the scale clamp."""
    weights = rng.dirichlet(np.ones(k))
    means = rng.uniform(-span, span, size=k)
    scales = np.exp(rng.uniform(math.log(0.003), math.log(60.0), size=k))
    return weights, means, scales


def naive_masked_conv(latents, kernel, bias):
    """Causal 5x5 convolution straight from the definition.

    Walks output positions and kernel offsets explicitly, skipping the
    center tap and everything after it in raster order, and uses matrix
    products over input channels -- the opposite structure of the package's
    tap-major accumulation.
    """
    latents = np.asarray(latents, dtype=np.float64)
    n, h, w = latents.shape
    out = np.zeros((kernel.shape[0], h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            acc = bias.astype(np.float64).copy()
            for r in range(5):
                for c in range(5):
                    if r > 2 or (r == 2 and c >= 2):
                        continue
                    yy, xx = y + r - 2, x + c - 2
                    if 0 <= yy < h and 0 <= xx < w:
                        acc += kernel[:, :, r, c] @ latents[:, yy, xx]
            out[:, y, x] = acc
    return out


def _window_means(x, win2):
    windows = sliding_window_view(x, win2.shape, axis=(-2, -1))
    return np.einsum("...ij,ij->...", windows, win2)


def ref_ms_ssim(a, b) -> float:
    """Multi-scale similarity from the definition, via 2-D sliding windows."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    offsets = np.arange(11, dtype=np.float64) - 5.0
    taps = np.array([math.exp(-(o * o) / (2.0 * 1.5 * 1.5)) for o in offsets])
    taps /= taps.sum()
    win2 = np.outer(taps, taps)
    weights = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
    c1, c2 = 0.01**2, 0.03**2
    score = np.ones(a.shape[0], dtype=np.float64)
    for level, weight in enumerate(weights):
        mu_a = _window_means(a, win2)
        mu_b = _window_means(b, win2)
        var_a = _window_means(a * a, win2) - mu_a * mu_a
        var_b = _window_means(b * b, win2) - mu_b * mu_b
        cov = _window_means(a * b, win2) - mu_a * mu_b
        cs = (2.0 * cov + c2) / (var_a + var_b + c2)
        lum = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
        term = (lum * cs) if level == len(weights) - 1 else cs
        per_channel = np.maximum(term.mean(axis=(1, 2)), 0.0)
        score = score * per_channel**weight
        if level < len(weights) - 1:
            h2, w2 = a.shape[1] // 2 * 2, a.shape[2] // 2 * 2
            a = a[:, :h2, :w2].reshape(a.shape[0], h2 // 2, 2, w2 // 2, 2).mean(axis=(2, 4))
            b = b[:, :h2, :w2].reshape(b.shape[0], h2 // 2, 2, w2 // 2, 2).mean(axis=(2, 4))
    return float(score.mean())
