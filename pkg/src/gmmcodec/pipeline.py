"""End-to-end image codec: transforms, hyper path, container assembly.

Geometry: images are replicate-padded at the bottom/right to multiples of
64, split into 16x16 RGB blocks, and each block is projected onto an
orthonormal basis to produce the latent tensor (n channels on the block
grid). Hyper latents summarize 4x4 groups of latent positions, are coded
against a static per-channel Gaussian prior, and feed the entropy model of
the main payload. The container records the original dimensions, so the
decoder re-derives every grid size from the header.

The linear algebra along the coded path runs as explicit input-index loops
of elementwise numpy operations (see context.py for why); the transforms
only run on one side each, but keeping the same discipline makes encoding
reproducible across BLAS configurations.
"""

from __future__ import annotations

import zlib

import numpy as np

from .container import BitstreamContainer
from .context import (
    EntropyParamWeights,
    MaskedConvWeights,
    decode_latents,
    encode_latents,
    zero_channel_mask,
)
from .errors import (
    CorruptStream,
    InvalidInput,
    ModelMismatch,
    ResourceLimit,
    ShapeError,
    TruncatedStream,
)
from .gmm import (
    ALPHABET_SIZE,
    SYMBOL_LO,
    GmmParamTensor,
    estimate_rate_bits,
    pmf_tables,
    quantize_latent,
)
from .modelfile import BLOCK_SIDE, HYPER_POOL, CodecModel
from .rangecoder import FREQ_TOTAL, RangeDecoder, RangeEncoder, quantize_freqs

PAD_MULTIPLE = BLOCK_SIDE * HYPER_POOL  # 64
MAX_PIXELS = 1 << 28  # refuse containers promising absurd allocations

REPORT_SCHEMA = 1


def _ceil_to(value: int, multiple: int) -> int:
    return -(-value // multiple) * multiple


def bpp(container_bytes: int, width: int, height: int) -> float:
    """Container size in bits divided by the original pixel count."""
    if width < 1 or height < 1:
        raise InvalidInput(f"pixel dimensions must be positive, got {width}x{height}")
    if container_bytes < 0:
        raise InvalidInput("container size cannot be negative")
    return container_bytes * 8 / (width * height)


def _symbol_crc(symbols: np.ndarray) -> int:
    """Checksum of a symbol tensor, dtype-normalized so both sides agree."""
    return zlib.crc32(np.ascontiguousarray(symbols, dtype=np.int32).tobytes())


def pad_image(image: np.ndarray) -> np.ndarray:
    """Replicate-pad (3, H, W) at the bottom/right to multiples of 64."""
    _, h, w = image.shape
    return np.pad(
        image,
        ((0, 0), (0, _ceil_to(h, PAD_MULTIPLE) - h), (0, _ceil_to(w, PAD_MULTIPLE) - w)),
        mode="edge",
    )


def image_to_blocks(padded: np.ndarray) -> np.ndarray:
    """(3, Hp, Wp) -> (768, blocks): one flattened 16x16 RGB block per column.

    Blocks are ordered raster-wise; within a block the 768 values follow the
    C-order flatten of (channel, row, column).
    """
    c, hp, wp = padded.shape
    hb, wb = hp // BLOCK_SIDE, wp // BLOCK_SIDE
    blocks = (
        padded.reshape(c, hb, BLOCK_SIDE, wb, BLOCK_SIDE)
        .transpose(1, 3, 0, 2, 4)
        .reshape(hb * wb, c * BLOCK_SIDE * BLOCK_SIDE)
    )
    return np.ascontiguousarray(blocks.T)


def blocks_to_image(mat: np.ndarray, hp: int, wp: int) -> np.ndarray:
    """Inverse of image_to_blocks."""
    hb, wb = hp // BLOCK_SIDE, wp // BLOCK_SIDE
    return (
        mat.T.reshape(hb, wb, 3, BLOCK_SIDE, BLOCK_SIDE)
        .transpose(2, 0, 3, 1, 4)
        .reshape(3, hp, wp)
    )


def analysis_transform(padded: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Project padded image blocks onto the basis rows: (n, Hb, Wb) latents."""
    vec = image_to_blocks(np.asarray(padded, dtype=np.float64))
    acc = np.zeros((basis.shape[0], vec.shape[1]), dtype=np.float64)
    for i in range(basis.shape[1]):
        acc += basis[:, i][:, None] * vec[i][None, :]
    _, hp, wp = padded.shape
    return acc.reshape(basis.shape[0], hp // BLOCK_SIDE, wp // BLOCK_SIDE)


def synthesis_transform(latents: np.ndarray, basis: np.ndarray, clip: bool = True) -> np.ndarray:
    """Back-project (n, Hb, Wb) latents to a (3, Hp, Wp) image."""
    n, hb, wb = latents.shape
    flat = np.asarray(latents, dtype=np.float64).reshape(n, hb * wb)
    acc = np.zeros((basis.shape[1], flat.shape[1]), dtype=np.float64)
    for j in range(n):
        acc += basis[j][:, None] * flat[j][None, :]
    image = blocks_to_image(acc, hb * BLOCK_SIDE, wb * BLOCK_SIDE)
    return np.clip(image, 0.0, 1.0) if clip else image


def pool_abs_mean(latents: np.ndarray) -> np.ndarray:
    """Mean of |latents| over non-overlapping 4x4 position groups."""
    n, h, w = latents.shape
    if h % HYPER_POOL or w % HYPER_POOL:
        raise ShapeError(f"latent grid {h}x{w} not divisible by {HYPER_POOL}")
    a = np.abs(latents).reshape(n, h // HYPER_POOL, HYPER_POOL, w // HYPER_POOL, HYPER_POOL)
    return a.mean(axis=(2, 4))


def hyper_analysis(latents: np.ndarray, model: CodecModel) -> np.ndarray:
    """Hyper latents: pooled |y| statistics mixed through the pool map."""
    pooled = pool_abs_mean(latents)
    acc = np.zeros((model.nz,) + pooled.shape[1:], dtype=np.float64)
    for i in range(pooled.shape[0]):
        acc += model.pool_map[:, i][:, None, None] * pooled[i][None, :, :]
    return acc


def hyper_features(z_hat: np.ndarray, model: CodecModel) -> np.ndarray:
    """Entropy-model side information on the latent grid.

    Quantized hyper latents are upsampled 4x by nearest neighbor and pushed
    through a 1x1 layer with relu. Runs identically on both codec sides.
    """
    up = np.repeat(np.repeat(z_hat.astype(np.float64), HYPER_POOL, 1), HYPER_POOL, 2)
    wt = np.ascontiguousarray(model.hyper_feature_weight.T)
    out = np.zeros((wt.shape[1],) + up.shape[1:], dtype=np.float64)
    for i in range(wt.shape[0]):
        out += wt[i][:, None, None] * up[i][None, :, :]
    out += model.hyper_feature_bias[:, None, None]
    return np.maximum(out, 0.0)


def _hyper_tables(model: CodecModel):
    """Static cumulative tables for the hyper channels' Gaussian priors."""
    pmf = pmf_tables(
        np.ones((1, model.nz)), model.prior_mean[None, :], model.prior_scale[None, :]
    )
    freq = quantize_freqs(pmf)
    cum = np.zeros((model.nz, ALPHABET_SIZE + 1), dtype=np.int64)
    np.cumsum(freq, axis=-1, out=cum[:, 1:])
    return cum


def encode_hyper(z_hat: np.ndarray, model: CodecModel):
    """Code hyper latents raster-wise, channels inner, against the prior.

    Returns (payload bytes, info dict) with the prior cross-entropy
    estimate and the cross-entropy under the quantized tables.
    """
    cum = _hyper_tables(model)
    nz, hz, wz = z_hat.shape
    estimated = estimate_rate_bits(
        z_hat,
        GmmParamTensor(
            np.ones((1, nz, hz, wz)),
            np.broadcast_to(model.prior_mean[None, :, None, None], (1, nz, hz, wz)),
            np.broadcast_to(model.prior_scale[None, :, None, None], (1, nz, hz, wz)),
        ),
    )
    freq = np.diff(cum, axis=-1)
    idx = np.asarray(z_hat, dtype=np.int64) - SYMBOL_LO
    hit = freq[np.arange(nz)[:, None, None], idx]
    quantized = float(np.sum(16.0 - np.log2(hit)))
    enc = RangeEncoder()
    for y in range(hz):
        for x in range(wz):
            for c in range(nz):
                index = int(idx[c, y, x])
                enc.encode_index(index, cum[c], index == ALPHABET_SIZE - 1)
    info = {
        "estimated_bits": float(estimated),
        "quantized_bits": quantized,
        "coded_symbols": nz * hz * wz,
    }
    return enc.finish(), info


def decode_hyper(payload: bytes, model: CodecModel, hz: int, wz: int) -> np.ndarray:
    cum = _hyper_tables(model)
    dec = RangeDecoder(payload)
    out = np.zeros((model.nz, hz, wz), dtype=np.int32)
    for y in range(hz):
        for x in range(wz):
            for c in range(model.nz):
                out[c, y, x] = dec.decode_index(cum[c], FREQ_TOTAL) + SYMBOL_LO
    return out


def _validate_image(image) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise InvalidInput(f"expected a (3, H, W) image, got {image.shape}")
    if image.shape[1] < 1 or image.shape[2] < 1:
        raise InvalidInput("image has no pixels")
    if not np.all(np.isfinite(image)):
        raise InvalidInput("image contains non-finite values")
    if image.min() < 0.0 or image.max() > 1.0:
        raise InvalidInput("pixel values must lie in [0, 1]")
    return image


def _model_weights(model: CodecModel):
    conv_w = MaskedConvWeights(model.context_kernel, model.context_bias)
    ep = EntropyParamWeights(model.ep_w1, model.ep_b1, model.ep_w2, model.ep_b2)
    return conv_w, ep


def encode_image(image, model: CodecModel, threads: int = 1,
                 max_pixels: int = MAX_PIXELS):
    """Compress one image.

    Args:
        image: (3, H, W) float array with values in [0, 1].
        model: loaded parameter set.
        threads: worker threads for probability-table construction; output
            bytes are identical for any value.
        max_pixels: refuse images larger than this many pixels.

    Returns:
        (container bytes, report dict).
    """
    image = _validate_image(image)
    _, height, width = image.shape
    if height * width > max_pixels:
        raise ResourceLimit(f"{height}x{width} exceeds {max_pixels} pixels")
    padded = pad_image(image)
    latents = analysis_transform(padded, model.basis)
    y_hat = quantize_latent(latents)
    z_hat = quantize_latent(hyper_analysis(latents, model))
    hyper_payload, hyper_info = encode_hyper(z_hat, model)
    feats = hyper_features(z_hat, model)
    mask = zero_channel_mask(y_hat)
    conv_w, ep = _model_weights(model)
    main_payload, info = encode_latents(
        y_hat, conv_w, ep, model.k, feats, mask, threads=threads
    )
    blob = BitstreamContainer(
        model.k, model.n, width, height, mask, hyper_payload, main_payload
    ).serialize()
    report = {
        "schema": REPORT_SCHEMA,
        "action": "encode",
        "width": width,
        "height": height,
        "padded_width": padded.shape[2],
        "padded_height": padded.shape[1],
        "k": model.k,
        "n": model.n,
        "skipped_channels": int(mask.sum()),
        "hyper_bytes": len(hyper_payload),
        "main_bytes": len(main_payload),
        "container_bytes": len(blob),
        "bpp": bpp(len(blob), width, height),
        "estimated_main_bits": info["estimated_bits"],
        "quantized_main_bits": info["quantized_bits"],
        "actual_main_bits": len(main_payload) * 8,
        "estimated_hyper_bits": hyper_info["estimated_bits"],
        "quantized_hyper_bits": hyper_info["quantized_bits"],
        "actual_hyper_bits": len(hyper_payload) * 8,
        "estimated_bits": info["estimated_bits"] + hyper_info["estimated_bits"],
        "actual_bits": (len(main_payload) + len(hyper_payload)) * 8,
        "coded_symbols": info["coded_symbols"],
        "latent_crc32": _symbol_crc(y_hat),
        "hyper_crc32": _symbol_crc(z_hat),
    }
    return blob, report


def decode_image(data: bytes, model: CodecModel, max_pixels: int = MAX_PIXELS):
    """Decompress a container produced by encode_image.

    Returns:
        ((3, H, W) float image in [0, 1], report dict).

    Raises:
        ModelMismatch: container geometry disagrees with the model.
        ResourceLimit: header promises more than max_pixels pixels.
        CorruptStream: checksum failure, or a payload too short for the
            symbols the header promises.
    """
    box = BitstreamContainer.parse(data)
    if box.k != model.k or box.n != model.n:
        raise ModelMismatch(
            f"container expects k={box.k}, n={box.n}; model has k={model.k}, n={model.n}"
        )
    if box.width * box.height > max_pixels:
        raise ResourceLimit(f"{box.height}x{box.width} exceeds {max_pixels} pixels")
    hp = _ceil_to(box.height, PAD_MULTIPLE)
    wp = _ceil_to(box.width, PAD_MULTIPLE)
    hb, wb = hp // BLOCK_SIDE, wp // BLOCK_SIDE
    conv_w, ep = _model_weights(model)
    try:
        z_hat = decode_hyper(box.hyper_payload, model, hb // HYPER_POOL, wb // HYPER_POOL)
        feats = hyper_features(z_hat, model)
        y_hat = decode_latents(box.main_payload, conv_w, ep, model.k, feats, box.skip_flags)
    except TruncatedStream as exc:
        raise CorruptStream(f"payload ends before its symbols do: {exc}") from exc
    image = synthesis_transform(y_hat.astype(np.float64), model.basis)
    image = image[:, : box.height, : box.width]
    report = {
        "schema": REPORT_SCHEMA,
        "action": "decode",
        "width": box.width,
        "height": box.height,
        "k": box.k,
        "n": box.n,
        "skipped_channels": int(box.skip_flags.sum()),
        "hyper_bytes": len(box.hyper_payload),
        "main_bytes": len(box.main_payload),
        "container_bytes": len(data),
        "bpp": bpp(len(data), box.width, box.height),
        "latent_crc32": _symbol_crc(y_hat),
        "hyper_crc32": _symbol_crc(z_hat),
    }
    return image, report
