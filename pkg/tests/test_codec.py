import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from changeflow import codec as codec_mod
from changeflow.codec import (
    ConvMaskCodec,
    IdentityCodec,
    decode_latent,
    decode_latents,
    encode_mask,
    encode_masks,
    load_codec,
    roundtrip_report,
    train_codec,
)
from changeflow.config import CodecConfig
from changeflow.errors import InvalidArgumentError, ShapeError


def _checkerboard(n=8):
    yy, xx = np.mgrid[0:n, 0:n]
    return ((yy + xx) % 2).astype(np.uint8)


def test_identity_encode_all_zeros_gives_minus_one():
    latent = encode_mask(IdentityCodec(), np.zeros((8, 8), dtype=np.uint8))
    assert latent.shape == (3, 8, 8)
    assert torch.equal(latent, torch.full((3, 8, 8), -1.0))


def test_identity_encode_checkerboard_replicates_pattern():
    board = _checkerboard()
    latent = encode_mask(IdentityCodec(), board)
    expected = torch.from_numpy(board.astype(np.float32)) * 2.0 - 1.0
    for c in range(3):
        assert torch.equal(latent[c], expected)


def test_identity_roundtrip_is_exact():
    board = _checkerboard(16)
    soft = decode_latent(IdentityCodec(), encode_mask(IdentityCodec(), board))
    assert torch.equal(soft, torch.from_numpy(board.astype(np.float32)))


def test_identity_decode_of_minus_ones_is_zero_mask():
    soft = decode_latent(IdentityCodec(), torch.full((3, 4, 4), -1.0))
    assert torch.equal(soft, torch.zeros(4, 4))


def test_conv_codec_shape_contract():
    codec = ConvMaskCodec()
    latent = encode_mask(codec, np.zeros((64, 64), dtype=np.uint8))
    assert latent.shape == (4, 16, 16)
    assert decode_latent(codec, latent).shape == (64, 64)


def test_encode_rejects_indivisible_dims():
    with pytest.raises(ShapeError):
        encode_mask(ConvMaskCodec(), np.zeros((30, 30), dtype=np.uint8))


def test_encode_rejects_nonbinary_values():
    bad = np.full((8, 8), 0.5)
    with pytest.raises(InvalidArgumentError):
        encode_mask(IdentityCodec(), bad)


def test_decode_rejects_wrong_channel_count():
    with pytest.raises(ShapeError):
        decode_latent(ConvMaskCodec(), torch.zeros(3, 16, 16))


def test_encode_is_deterministic():
    codec = ConvMaskCodec()
    mask = _checkerboard(64)
    a = encode_mask(codec, mask)
    b = encode_mask(codec, mask)
    assert torch.equal(a, b)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 1000.0))
def test_decoded_values_always_in_unit_interval(seed, scale):
    codec = ConvMaskCodec()
    g = torch.Generator().manual_seed(seed)
    latent = torch.randn(2, 4, 8, 8, generator=g) * scale
    soft = decode_latents(codec, latent)
    assert float(soft.min()) >= 0.0
    assert float(soft.max()) <= 1.0


def test_roundtrip_report_identity_is_perfect():
    masks = np.stack([_checkerboard(16), np.ones((16, 16), dtype=np.uint8)])
    report = roundtrip_report(IdentityCodec(), masks)
    assert report.f1 == 1.0
    assert report.mae == 0.0


def test_roundtrip_report_all_zero_masks_has_undefined_f1():
    masks = np.zeros((3, 16, 16), dtype=np.uint8)
    report = roundtrip_report(IdentityCodec(), masks)
    assert math.isnan(report.f1)
    assert report.mae <= 0.005


class _ComplementCodec(IdentityCodec):
    """Reconstructs the exact complement of its input."""

    def decoder_apply(self, z):
        return -z


def test_roundtrip_report_complement_reconstruction_scores_zero():
    masks = np.stack([_checkerboard(8)])
    report = roundtrip_report(_ComplementCodec(), masks)
    assert report.f1 == 0.0


def test_train_codec_rejects_empty_and_small_datasets():
    with pytest.raises(InvalidArgumentError):
        train_codec(np.zeros((0, 8, 8)), CodecConfig())
    with pytest.raises(InvalidArgumentError):
        train_codec(np.zeros((10, 8, 8), dtype=np.uint8), CodecConfig())


def test_train_codec_identity_kind_skips_training():
    masks = np.stack([_checkerboard(8) for _ in range(5)])
    codec, report = train_codec(masks, CodecConfig(kind="identity"))
    assert isinstance(codec, IdentityCodec)
    assert report.epoch_losses == []
    assert report.holdout.f1 == 1.0


def test_codec_checkpoint_roundtrip(tmp_path):
    codec = ConvMaskCodec()
    path = tmp_path / "codec.ckpt"
    codec.save(path)
    loaded = load_codec(path)
    mask = _checkerboard(64)
    assert torch.equal(encode_mask(codec, mask), encode_mask(loaded, mask))


def test_identity_codec_checkpoint_roundtrip(tmp_path):
    path = tmp_path / "codec.ckpt"
    IdentityCodec().save(path)
    assert isinstance(load_codec(path), IdentityCodec)


def test_trained_codec_meets_roundtrip_targets(desk_codec_bundle):
    """Trained desk codec: held-out F1 >= 0.99 and MAE <= 0.005 (20 epochs, 1000 masks)."""
    report = desk_codec_bundle["train_report"]
    assert report["epochs"] == 20
    assert report["train_mask_count"] == 1000
    assert report["holdout_f1"] >= 0.99
    assert report["holdout_mae"] <= 0.005


def test_trained_codec_loss_decreased_monotonically_after_smoothing(desk_codec_bundle):
    smoothed = desk_codec_bundle["train_report"]["smoothed_losses"]
    assert all(b <= a + 1e-9 for a, b in zip(smoothed, smoothed[1:]))
