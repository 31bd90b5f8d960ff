"""Model parameter file: the "GMMP" named-tensor container.

Layout (little-endian): magic "GMMP", one version byte, then tensors back to
back until end of file. Each tensor is {name length u8, name bytes, rank u8,
one u32 per dimension, float32 data}. Data is stored float32 and promoted to
float64 on load; the promotion is exact, so a model file pins the codec's
arithmetic bit for bit.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CorruptStream, ModelMismatch, UnsupportedVersion
from .gmm import SIGMA_FLOOR

MODEL_MAGIC = b"GMMP"
MODEL_VERSION = 1

# Fixed desk-scale geometry: 16x16 RGB image blocks feed the latent transform.
BLOCK_SIDE = 16
BLOCK_DIM = 3 * BLOCK_SIDE * BLOCK_SIDE  # 768
HYPER_POOL = 4  # hyper latents summarize 4x4 groups of latent positions

REQUIRED_TENSORS = (
    "analysis.basis",
    "hyper.pool_map",
    "hyper.prior_mean",
    "hyper.prior_scale",
    "hyper.feature_weight",
    "hyper.feature_bias",
    "context.kernel",
    "context.bias",
    "entropy.w1",
    "entropy.b1",
    "entropy.w2",
    "entropy.b2",
)


def write_tensors(fp, tensors: dict):
    """Serialize named float32 tensors in file order."""
    fp.write(MODEL_MAGIC)
    fp.write(struct.pack("<B", MODEL_VERSION))
    for name, array in tensors.items():
        # np.ascontiguousarray would promote 0-d arrays to 1-d; keep the rank.
        arr = np.asarray(array, dtype=np.float32, order="C")
        encoded = name.encode("utf-8")
        if len(encoded) > 255:
            raise ValueError(f"tensor name too long: {name}")
        fp.write(struct.pack("<B", len(encoded)))
        fp.write(encoded)
        fp.write(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            fp.write(struct.pack("<I", dim))
        fp.write(arr.tobytes(order="C"))


def read_tensors(fp) -> dict:
    """Parse a GMMP stream into {name: float64 array}."""

    def take(n, what):
        buf = fp.read(n)
        if len(buf) != n:
            raise CorruptStream(f"model file truncated while reading {what}")
        return buf

    if take(4, "magic") != MODEL_MAGIC:
        raise CorruptStream("not a GMMP model file")
    (version,) = struct.unpack("<B", take(1, "version"))
    if version != MODEL_VERSION:
        raise UnsupportedVersion(f"model version {version}, expected {MODEL_VERSION}")
    tensors = {}
    while True:
        head = fp.read(1)
        if not head:
            return tensors
        (name_len,) = struct.unpack("<B", head)
        name = take(name_len, "tensor name").decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, "rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims")) if rank else ()
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw = take(4 * count, f"data of {name}")
        data = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(dims)
        tensors[name] = data


def save_model(path, tensors: dict):
    with open(path, "wb") as fp:
        write_tensors(fp, tensors)


@dataclass(frozen=True)
class CodecModel:
    """Loaded, validated parameter set driving the whole pipeline.

    k/n are inferred from tensor shapes: n latent channels from the analysis
    basis, k mixtures from the entropy head's output width (3*k*n).
    """

    basis: np.ndarray                # (n, 768) orthonormal rows
    pool_map: np.ndarray             # (nz, n)
    prior_mean: np.ndarray           # (nz,)
    prior_scale: np.ndarray          # (nz,)
    hyper_feature_weight: np.ndarray # (ch, nz)
    hyper_feature_bias: np.ndarray   # (ch,)
    context_kernel: np.ndarray       # (cctx, n, 5, 5), spatially causal
    context_bias: np.ndarray         # (cctx,)
    ep_w1: np.ndarray                # (hidden, cctx + ch)
    ep_b1: np.ndarray
    ep_w2: np.ndarray                # (3*k*n, hidden)
    ep_b2: np.ndarray
    k: int
    n: int

    @property
    def nz(self) -> int:
        return self.pool_map.shape[0]

    @classmethod
    def from_tensors(cls, tensors: dict) -> "CodecModel":
        missing = [name for name in REQUIRED_TENSORS if name not in tensors]
        if missing:
            raise ModelMismatch(f"model file lacks tensors: {missing}")
        basis = tensors["analysis.basis"]
        if basis.ndim != 2 or basis.shape[1] != BLOCK_DIM:
            raise ModelMismatch(f"analysis.basis must be (n, {BLOCK_DIM}), got {basis.shape}")
        n = basis.shape[0]
        kernel = tensors["context.kernel"]
        if kernel.ndim != 4 or kernel.shape[1] != n or kernel.shape[2:] != (5, 5):
            raise ModelMismatch(f"context.kernel must be (cctx, {n}, 5, 5), got {kernel.shape}")
        cctx = kernel.shape[0]
        ch = tensors["hyper.feature_weight"].shape[0]
        w1 = tensors["entropy.w1"]
        if w1.shape[1] != cctx + ch:
            raise ModelMismatch(
                f"entropy.w1 expects {cctx + ch} input features, got {w1.shape[1]}"
            )
        w2 = tensors["entropy.w2"]
        out_dim = w2.shape[0]
        if out_dim % (3 * n) != 0:
            raise ModelMismatch(f"entropy head width {out_dim} is not a multiple of 3n")
        k = out_dim // (3 * n)
        if k < 1:
            raise ModelMismatch("mixture count must be >= 1")
        nz = tensors["hyper.pool_map"].shape[0]
        if tensors["hyper.pool_map"].shape != (nz, n):
            raise ModelMismatch("hyper.pool_map must be (nz, n)")
        for name, want in (
            ("hyper.prior_mean", (nz,)),
            ("hyper.prior_scale", (nz,)),
            ("hyper.feature_bias", (ch,)),
            ("context.bias", (cctx,)),
            ("entropy.b1", (w1.shape[0],)),
            ("entropy.b2", (out_dim,)),
        ):
            if tensors[name].shape != want:
                raise ModelMismatch(f"{name} must have shape {want}")
        if w2.shape[1] != w1.shape[0]:
            raise ModelMismatch("entropy.w2 input width must match entropy.w1 output")
        return cls(
            basis=basis,
            pool_map=tensors["hyper.pool_map"],
            prior_mean=tensors["hyper.prior_mean"],
            prior_scale=np.maximum(tensors["hyper.prior_scale"], SIGMA_FLOOR),
            hyper_feature_weight=tensors["hyper.feature_weight"],
            hyper_feature_bias=tensors["hyper.feature_bias"],
            context_kernel=kernel,
            context_bias=tensors["context.bias"],
            ep_w1=w1,
            ep_b1=tensors["entropy.b1"],
            ep_w2=w2,
            ep_b2=tensors["entropy.b2"],
            k=k,
            n=n,
        )


def load_model(path) -> CodecModel:
    """Read and validate a GMMP model file."""
    with open(path, "rb") as fp:
        tensors = read_tensors(fp)
    return CodecModel.from_tensors(tensors)


def load_model_bytes(data: bytes) -> CodecModel:
    return CodecModel.from_tensors(read_tensors(io.BytesIO(data)))
