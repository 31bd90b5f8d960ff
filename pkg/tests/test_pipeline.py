"""Whole-image codec: transforms, hyper path, containers, reports."""

import json
import time
import zlib

import numpy as np
import pytest

from gmmcodec import (
    BitstreamContainer,
    CorruptStream,
    InvalidInput,
    ModelMismatch,
    ResourceLimit,
    bpp,
    decode_image,
    encode_image,
    pad_image,
    quantize_latent,
)
from gmmcodec.pipeline import (
    analysis_transform,
    blocks_to_image,
    decode_hyper,
    encode_hyper,
    hyper_analysis,
    image_to_blocks,
    synthesis_transform,
)

from conftest import DATA_DIR


def test_bpp_helper():
    assert bpp(1000, 200, 200) == 0.2
    with pytest.raises(InvalidInput):
        bpp(10, 0, 64)


def test_pad_image_replicates_edges():
    img = np.arange(3 * 5 * 7, dtype=np.float64).reshape(3, 5, 7) / 200.0
    padded = pad_image(img)
    assert padded.shape == (3, 64, 64)
    assert np.array_equal(padded[:, :5, :7], img)
    assert np.all(padded[:, 5:, :7] == padded[:, 4:5, :7])
    assert np.all(padded[:, :, 7:] == padded[:, :, 6:7])
    exact = np.zeros((3, 64, 128))
    assert pad_image(exact).shape == (3, 64, 128)


def test_block_vector_layout():
    """Block columns flatten (channel, row, col) in C order."""
    img = np.zeros((3, 32, 32))
    for c in range(3):
        img[c] = c * 10000 + np.arange(32)[:, None] * 100 + np.arange(32)[None, :]
    mat = image_to_blocks(img)
    assert mat.shape == (768, 4)
    block00 = img[:, :16, :16].reshape(-1)
    assert np.array_equal(mat[:, 0], block00)
    block01 = img[:, :16, 16:32].reshape(-1)
    assert np.array_equal(mat[:, 1], block01)
    assert np.array_equal(blocks_to_image(mat, 32, 32), img)


def test_analysis_matches_matrix_product(model, rng):
    """The loop-accumulated projection equals a straight matmul."""
    img = rng.random((3, 64, 64))
    latents = analysis_transform(img, model.basis)
    direct = (model.basis @ image_to_blocks(img)).reshape(latents.shape)
    assert np.max(np.abs(latents - direct)) < 1e-9


def test_transform_roundtrip_unquantized(model, rng):
    """Latent-space content survives synthesis/analysis almost exactly."""
    y = rng.uniform(-3, 3, size=(model.n, 8, 8))
    img = synthesis_transform(y, model.basis, clip=False)
    back = analysis_transform(img, model.basis)
    rms = float(np.sqrt(np.mean((back - y) ** 2)))
    assert rms <= 1e-5


def test_transform_roundtrip_quantized_bound(model, rng):
    """Pixel RMS after quantization stays under half the max row norm."""
    y = rng.uniform(-3, 3, size=(model.n, 8, 8))
    img = synthesis_transform(y, model.basis, clip=False)
    y_hat = quantize_latent(analysis_transform(img, model.basis))
    recon = synthesis_transform(y_hat.astype(np.float64), model.basis, clip=False)
    rms = float(np.sqrt(np.mean((recon - img) ** 2)))
    bound = 0.5 * float(np.max(np.linalg.norm(model.basis, axis=1)))
    assert rms <= bound


def test_integer_latents_survive_reanalysis(model, rng):
    """If y is already integral, quantization costs nothing."""
    y = rng.integers(-40, 41, size=(model.n, 4, 4)).astype(np.float64)
    img = synthesis_transform(y, model.basis, clip=False)
    assert np.array_equal(quantize_latent(analysis_transform(img, model.basis)), y)


def test_energy_preserved_for_spanned_images(model, rng):
    """Near-orthonormal rows keep block energy through analysis."""
    y = rng.uniform(-2, 2, size=(model.n, 4, 4))
    img = synthesis_transform(y, model.basis, clip=False)
    latents = analysis_transform(img, model.basis)
    e_img = float(np.sum(img**2))
    e_lat = float(np.sum(latents**2))
    assert abs(e_lat - e_img) <= 1e-6 * e_img


def test_zero_latents_give_flat_zero_image(model):
    img = synthesis_transform(np.zeros((model.n, 4, 4)), model.basis)
    assert np.all(img == 0.0)


def test_mid_gray_dc_latent(model):
    latents = analysis_transform(np.full((3, 64, 64), 0.5), model.basis)
    expected_dc = 0.5 * float(model.basis[0].sum())
    assert latents[0] == pytest.approx(expected_dc, rel=1e-12)
    assert expected_dc == pytest.approx(13.8564, abs=1e-3)


def test_hyper_roundtrip(model, rng):
    y = rng.uniform(-9, 9, size=(model.n, 8, 8))
    z_hat = quantize_latent(hyper_analysis(y, model))
    payload, info = encode_hyper(z_hat, model)
    assert np.array_equal(decode_hyper(payload, model, 2, 2), z_hat)
    assert len(payload) * 8 <= info["quantized_bits"] + 64
    assert info["coded_symbols"] == model.nz * 4


def encode_decode(model, img, **kw):
    blob, enc_report = encode_image(img, model, **kw)
    recon, dec_report = decode_image(blob, model)
    return blob, enc_report, recon, dec_report


def test_image_roundtrip_is_symbol_exact(model, rng):
    img = rng.random((3, 64, 64))
    blob, enc, recon, dec = encode_decode(model, img)
    assert enc["latent_crc32"] == dec["latent_crc32"]
    assert enc["hyper_crc32"] == dec["hyper_crc32"]
    assert recon.shape == img.shape
    assert recon.min() >= 0.0 and recon.max() <= 1.0
    # the reconstruction is exactly the synthesis of the coded symbols
    padded = pad_image(img)
    y_hat = quantize_latent(analysis_transform(padded, model.basis))
    direct = synthesis_transform(y_hat.astype(np.float64), model.basis)
    assert np.array_equal(recon, direct[:, :64, :64])


def test_report_rate_ledger(model, rng):
    """actual <= quantized + flush slack <= estimate + per-symbol slack."""
    img = rng.random((3, 64, 64))
    _, rep = encode_image(img, model)
    slack = 512 * rep["coded_symbols"] * 2.0**-16 * np.log2(np.e)
    assert rep["actual_main_bits"] <= rep["quantized_main_bits"] + 64
    assert rep["quantized_main_bits"] <= rep["estimated_main_bits"] + slack
    assert rep["actual_hyper_bits"] <= rep["quantized_hyper_bits"] + 64
    assert rep["actual_bits"] <= rep["estimated_bits"] + 128
    assert rep["bpp"] == bpp(rep["container_bytes"], 64, 64)
    assert rep["container_bytes"] == 16 + 16 + 8 + rep["hyper_bytes"] + rep["main_bytes"] + 4


def test_odd_dimensions_pad_and_crop(model, rng):
    img = rng.random((3, 70, 90))
    blob, enc, recon, dec = encode_decode(model, img)
    assert enc["padded_height"] == 128 and enc["padded_width"] == 128
    assert recon.shape == (3, 70, 90)
    assert dec["width"] == 90 and dec["height"] == 70
    box = BitstreamContainer.parse(blob)
    assert (box.width, box.height) == (90, 70)


def test_threads_do_not_change_container(model, rng):
    img = rng.random((3, 64, 64))
    blob1, _ = encode_image(img, model, threads=1)
    blob4, _ = encode_image(img, model, threads=4)
    assert blob1 == blob4


def test_zero_image_frozen_size(model):
    """All-zero input: every channel skipped, container frozen at 54 bytes."""
    blob, rep = encode_image(np.zeros((3, 64, 64)), model)
    assert rep["skipped_channels"] == model.n
    assert rep["main_bytes"] == 2  # bare flush
    assert len(blob) == 54
    assert rep["bpp"] == 54 * 8 / 4096
    recon, _ = decode_image(blob, model)
    assert np.all(recon == 0.0)


def test_skip_channels_beat_coding_zeros(model):
    """Honoring the flags costs strictly fewer payload bytes than coding
    the zero channels through the model."""
    from gmmcodec.context import encode_latents
    from gmmcodec.pipeline import _model_weights, hyper_features

    img = np.zeros((3, 64, 64))
    img[:, :16, :16] = 0.9
    padded = pad_image(img)
    y_hat = quantize_latent(analysis_transform(padded, model.basis))
    z_hat = quantize_latent(hyper_analysis(analysis_transform(padded, model.basis), model))
    feats = hyper_features(z_hat, model)
    conv_w, ep = _model_weights(model)
    from gmmcodec import zero_channel_mask

    mask = zero_channel_mask(y_hat)
    assert mask.any() and not mask.all()
    with_skip, _ = encode_latents(y_hat, conv_w, ep, model.k, feats, mask)
    without, _ = encode_latents(y_hat, conv_w, ep, model.k, feats, np.zeros(model.n, bool))
    assert len(with_skip) < len(without)


def test_input_validation(model):
    with pytest.raises(InvalidInput):
        encode_image(np.zeros((1, 8, 8)), model)
    with pytest.raises(InvalidInput):
        encode_image(np.full((3, 8, 8), 1.5), model)
    with pytest.raises(InvalidInput):
        encode_image(np.full((3, 8, 8), np.nan), model)


def test_resource_limits(model):
    with pytest.raises(ResourceLimit):
        encode_image(np.zeros((3, 64, 64)), model, max_pixels=1000)
    blob, _ = encode_image(np.zeros((3, 64, 64)), model)
    with pytest.raises(ResourceLimit):
        decode_image(blob, model, max_pixels=1000)


def test_geometry_mismatch_rejected(model):
    blob, _ = encode_image(np.zeros((3, 64, 64)), model)
    box = BitstreamContainer.parse(blob)
    wrong_k = BitstreamContainer(
        box.k + 1, box.n, box.width, box.height, box.skip_flags,
        box.hyper_payload, box.main_payload,
    ).serialize()
    with pytest.raises(ModelMismatch):
        decode_image(wrong_k, model)


def test_truncated_payload_is_corrupt_not_crash(model, rng):
    img = rng.random((3, 64, 64))
    blob, _ = encode_image(img, model)
    box = BitstreamContainer.parse(blob)
    short = BitstreamContainer(
        box.k, box.n, box.width, box.height, box.skip_flags,
        box.hyper_payload, box.main_payload[:3],
    ).serialize()
    with pytest.raises(CorruptStream):
        decode_image(short, model)


def test_flipped_container_byte_detected(model, rng):
    blob, _ = encode_image(rng.random((3, 64, 64)), model)
    for pos in (5, 20, len(blob) - 10):
        bad = bytearray(blob)
        bad[pos] ^= 0xFF
        with pytest.raises(CorruptStream):
            decode_image(bytes(bad), model)


def test_golden_sample_container(model):
    """The stored reference container reproduces byte-for-byte and decodes
    to the frozen reconstruction."""
    meta = json.loads((DATA_DIR / "sample.json").read_text())
    from gmmcodec.cli import read_image

    img = read_image(str(DATA_DIR / "sample.png"))
    golden = (DATA_DIR / "sample.gmc").read_bytes()
    blob, rep = encode_image(img, model)
    assert blob == golden
    assert len(blob) == meta["container_bytes"]
    assert rep["bpp"] == meta["bpp"]
    recon, dec = decode_image(golden, model)
    assert dec["latent_crc32"] == meta["latent_crc32"]
    assert zlib.crc32(np.rint(recon * 255).astype(np.uint8).tobytes()) == meta["recon_crc32"]


def test_decode_time_linear_in_symbols(model, rng):
    """Per-symbol decode time is flat across 64/128/256-pixel squares.

    A quadratic decode loop (e.g. re-padding the whole buffer per position)
    would blow the generous 3x band: the position grid grows 16x between the
    smallest and largest image.
    """
    rates = []
    for side in (64, 128, 256):
        img = rng.random((3, side, side))
        blob, report = encode_image(img, model)
        dt = min(
            (lambda t0: (decode_image(blob, model), time.perf_counter() - t0)[1])(
                time.perf_counter()
            )
            for _ in range(3)
        )
        rates.append(dt / report["coded_symbols"])
    assert max(rates) <= 3.0 * min(rates)
