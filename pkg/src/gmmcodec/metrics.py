"""Multi-scale structural similarity and the rate-distortion objective.

The metric follows the usual five-scale recipe: an 11x11 Gaussian window
(sigma 1.5) produces local means/variances/covariance on the valid interior,
contrast-structure terms are averaged per scale, the image pair is 2x2
mean-pooled between scales, and the per-scale terms combine as a weighted
geometric product. Stabilizers use k1=0.01, k2=0.03 on a unit dynamic range.
Everything is computed per channel in float64 and averaged at the end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import InvalidInput, ShapeError

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


@dataclass(frozen=True)
class MsSsimConfig:
    filter_size: int = 11
    filter_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    weights: tuple = MS_SSIM_WEIGHTS

    def __post_init__(self):
        if self.filter_size % 2 != 1 or self.filter_size < 3:
            raise InvalidInput("filter size must be odd and >= 3")
        if not self.weights or any(w <= 0 for w in self.weights):
            raise InvalidInput("scale weights must be positive")

    @property
    def levels(self) -> int:
        return len(self.weights)

    @property
    def min_side(self) -> int:
        """Smallest image side the scale pyramid supports.

        Each of levels-1 downsamplings floor-halves the side, and the
        coarsest scale still needs one full filter window.
        """
        return self.filter_size * 2 ** (self.levels - 1)


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """1-D Gaussian taps normalized to sum to 1."""
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return w / w.sum()


def _filter_valid(x: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Separable windowed mean over (..., H, W), valid region only."""
    pad = window.size // 2
    out = correlate1d(correlate1d(x, window, axis=-1), window, axis=-2)
    return out[..., pad:-pad, pad:-pad]


def _scale_stats(a, b, window, c1, c2):
    """Mean ssim and contrast-structure terms per channel at one scale."""
    mu_a = _filter_valid(a, window)
    mu_b = _filter_valid(b, window)
    var_a = _filter_valid(a * a, window) - mu_a * mu_a
    var_b = _filter_valid(b * b, window) - mu_b * mu_b
    cov = _filter_valid(a * b, window) - mu_a * mu_b
    cs_map = (2.0 * cov + c2) / (var_a + var_b + c2)
    lum_map = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    axes = tuple(range(1, a.ndim))
    return (lum_map * cs_map).mean(axis=axes), cs_map.mean(axis=axes)


def _downsample(x: np.ndarray) -> np.ndarray:
    """2x2 mean pool; odd trailing rows/columns are dropped first."""
    h, w = x.shape[-2] // 2 * 2, x.shape[-1] // 2 * 2
    x = x[..., :h, :w]
    return x.reshape(*x.shape[:-2], h // 2, 2, w // 2, 2).mean(axis=(-3, -1))


def _validate_pair(a, b, config):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 3:
        raise ShapeError(f"need two (C, H, W) images of one shape, got {a.shape}/{b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidInput("images must be finite")
    if min(a.min(), b.min()) < 0.0 or max(a.max(), b.max()) > 1.0:
        raise InvalidInput("pixel values must lie in [0, 1]")
    if min(a.shape[-2:]) < config.min_side:
        raise InvalidInput(
            f"images must be at least {config.min_side} pixels on a side "
            f"for {config.levels} scales, got {a.shape[-2:]}"
        )
    return a, b


def ms_ssim(a, b, config: MsSsimConfig | None = None) -> float:
    """Multi-scale structural similarity of two (C, H, W) images in [0, 1].

    Contrast-structure terms at the fine scales and the full ssim term at
    the coarsest are clipped at zero before entering the geometric product,
    so the result lies in [0, 1].
    """
    config = config or MsSsimConfig()
    a, b = _validate_pair(a, b, config)
    window = gaussian_window(config.filter_size, config.filter_sigma)
    c1 = config.k1 * config.k1
    c2 = config.k2 * config.k2
    per_channel = np.ones(a.shape[0], dtype=np.float64)
    for level in range(config.levels):
        ssim_c, cs_c = _scale_stats(a, b, window, c1, c2)
        term = ssim_c if level == config.levels - 1 else cs_c
        per_channel = per_channel * np.maximum(term, 0.0) ** config.weights[level]
        if level < config.levels - 1:
            a = _downsample(a)
            b = _downsample(b)
    return float(per_channel.mean())


def distortion(a, b, config: MsSsimConfig | None = None) -> float:
    """1 - ms_ssim, the quantity the rate-distortion objective penalizes."""
    return 1.0 - ms_ssim(a, b, config)


def rd_loss(rate_y_bpp: float, rate_z_bpp: float, dist: float, lam: float) -> float:
    """Rate-distortion objective R_y + R_z + lam * D, rates in bits per pixel."""
    if rate_y_bpp < 0 or rate_z_bpp < 0 or lam < 0:
        raise InvalidInput("rates and lambda must be nonnegative")
    if not 0.0 <= dist <= 1.0:
        raise InvalidInput("distortion must lie in [0, 1]")
    return rate_y_bpp + rate_z_bpp + lam * dist


@dataclass(frozen=True)
class RdReport:
    """One evaluation record: payload rates, quality, and the objective."""

    rate_y_bits: int
    rate_z_bits: int
    num_pixels: int
    ms_ssim: float
    lam: float

    def __post_init__(self):
        if self.num_pixels <= 0:
            raise InvalidInput("num_pixels must be positive")
        if self.rate_y_bits < 0 or self.rate_z_bits < 0:
            raise InvalidInput("payload bit counts must be nonnegative")
        if not 0.0 <= self.ms_ssim <= 1.0:
            raise InvalidInput("ms_ssim must lie in [0, 1]")
        if self.lam < 0:
            raise InvalidInput("lambda must be nonnegative")

    @property
    def bpp(self) -> float:
        return (self.rate_y_bits + self.rate_z_bits) / self.num_pixels

    @property
    def distortion(self) -> float:
        return 1.0 - self.ms_ssim

    @property
    def loss(self) -> float:
        return rd_loss(self.rate_y_bits / self.num_pixels,
                       self.rate_z_bits / self.num_pixels,
                       self.distortion, self.lam)
