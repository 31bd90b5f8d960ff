"""Deterministic construction of the bundled demonstration model.

The analysis basis is the first 128 rows of a 768-point Hadamard matrix
(order-12 Paley construction crossed with an order-64 Sylvester matrix)
scaled to unit row norm. Hadamard rows keep the basis essentially orthogonal
even after float32 storage: every entry is the same magnitude, so rounding
scales the matrix instead of skewing it. Row 0 is the all-ones (DC) row,
which makes constant images collapse to a single coded channel.

The context/entropy head weights are small seeded Gaussians -- untrained,
but they produce well-spread mixtures and stable scales, which is all the
codec plumbing needs. Weight magnitudes were picked so typical latents see
scales around 1-2 and means near 0.

Regenerating with the same seed reproduces the bundled model file byte for
byte; tests rely on that.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import hadamard

from .context import causal_mask
from .modelfile import BLOCK_DIM

TOY_SEED = 0xC0DEC

TOY_K = 3
TOY_N = 128
TOY_NZ = 32
TOY_CH = 64
TOY_CCTX = 64
TOY_HIDDEN = 96


def paley_hadamard_12() -> np.ndarray:
    """Order-12 Hadamard matrix H = I + S with S the bordered skew
    Jacobsthal matrix of the quadratic residues mod 11."""
    q = 11
    residues = {(x * x) % q for x in range(1, q)}

    def chi(x):
        x %= q
        if x == 0:
            return 0
        return 1 if x in residues else -1

    s = np.zeros((q + 1, q + 1), dtype=np.int64)
    s[0, 1:] = 1
    s[1:, 0] = -1
    for i in range(q):
        for j in range(q):
            s[1 + i, 1 + j] = chi(j - i)
    h = s + np.eye(q + 1, dtype=np.int64)
    assert (h @ h.T == (q + 1) * np.eye(q + 1, dtype=np.int64)).all()
    return h


def toy_basis() -> np.ndarray:
    """(128, 768) float32 orthonormal-row analysis basis."""
    h = np.kron(paley_hadamard_12(), hadamard(64, dtype=np.int64))[:TOY_N]
    basis = (h.astype(np.float64) / np.sqrt(float(BLOCK_DIM))).astype(np.float32)
    # float32 storage leaves the Gram a uniform scalar multiple of the
    # identity: all entries share one magnitude, so rounding rescales rows
    # without skewing them. The scale sits ~3.6e-8 below 1.
    gram = basis.astype(np.float64) @ basis.astype(np.float64).T
    assert abs(gram[0, 0] - 1.0) < 1e-6
    assert np.abs(gram - gram[0, 0] * np.eye(TOY_N)).max() < 1e-9
    return basis


def toy_tensors(seed: int = TOY_SEED) -> dict:
    """All model tensors as float32, keyed by their file names.

    Random draws happen in the fixed order below; changing it changes the
    bundled model.
    """
    rng = np.random.default_rng(seed)
    kn = TOY_K * TOY_N

    pool_map = rng.normal(0.0, 0.1, (TOY_NZ, TOY_N))
    prior_scale = rng.uniform(0.5, 3.0, TOY_NZ)
    feature_weight = rng.normal(0.0, 0.1, (TOY_CH, TOY_NZ))
    kernel = rng.normal(0.0, 0.05, (TOY_CCTX, TOY_N, 5, 5))
    kernel[:, :, ~causal_mask()] = 0.0
    context_bias = rng.normal(0.0, 0.1, TOY_CCTX)
    w1 = rng.normal(0.0, 0.08, (TOY_HIDDEN, TOY_CCTX + TOY_CH))
    w2 = rng.standard_normal((3 * kn, TOY_HIDDEN))
    w2[:kn] *= 0.02        # mixture logits: near-uniform weights
    w2[kn : 2 * kn] *= 0.05  # means stay near zero
    w2[2 * kn :] *= 0.02   # raw scales stay near their bias
    b2 = np.zeros(3 * kn)
    b2[2 * kn :] = 1.2     # softplus(1.2) ~ 1.46, a comfortable base scale

    tensors = {
        "analysis.basis": toy_basis(),
        "hyper.pool_map": pool_map,
        "hyper.prior_mean": np.zeros(TOY_NZ),
        "hyper.prior_scale": prior_scale,
        "hyper.feature_weight": feature_weight,
        "hyper.feature_bias": np.zeros(TOY_CH),
        "context.kernel": kernel,
        "context.bias": context_bias,
        "entropy.w1": w1,
        "entropy.b1": np.zeros(TOY_HIDDEN),
        "entropy.w2": w2,
        "entropy.b2": b2,
    }
    return {name: np.asarray(t, dtype=np.float32) for name, t in tensors.items()}
