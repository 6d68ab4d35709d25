import hashlib
import struct

import numpy as np
import pytest

from app.core.config import CHECKPOINT_MAGIC
from app.core.errors import CheckpointError
from app.schemas.vit import ViTConfig
from app.services.checkpoint_service import (
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from app.services.vit_service import forward_classify, init_params, param_count
from app.tensor.tensor import no_grad


def with_digest(body: bytes) -> bytes:
    return body + hashlib.sha256(body).digest()


def test_save_load_is_bit_exact(tmp_path, tiny_config, rng):
    params = init_params(tiny_config, seed=7)
    path = save_checkpoint(params, tiny_config, tmp_path / "model.ckpt")
    loaded, config = load_checkpoint(path)

    assert config == tiny_config
    assert list(loaded) == list(params)
    for name in params:
        assert np.array_equal(loaded[name].data, params[name].data)

    images = rng.uniform(0, 1, size=(3, 32, 32, 3))
    with no_grad():
        before = forward_classify(images, params).numpy()
        after = forward_classify(images, loaded).numpy()
    assert np.array_equal(before, after)


def test_encoding_is_deterministic(tiny_config):
    assert encode_checkpoint(init_params(tiny_config, 1)) == encode_checkpoint(init_params(tiny_config, 1))
    assert encode_checkpoint(init_params(tiny_config, 1)) != encode_checkpoint(init_params(tiny_config, 2))


def test_tiny_checkpoint_sizes(tmp_path):
    config = ViTConfig(image_size=32, patch_size=16, hidden_dim=8, mlp_dim=16, num_heads=2, num_layers=1)
    path = save_checkpoint(init_params(config), config, tmp_path / "tiny.ckpt")
    params, _ = load_checkpoint(path)
    assert params.total_size() == param_count(config) == 6825


def test_truncated_file_rejected(tmp_path, tiny_config):
    path = save_checkpoint(init_params(tiny_config), tiny_config, tmp_path / "model.ckpt")
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(CheckpointError, match="model.ckpt"):
        load_checkpoint(path)


def test_flipped_byte_rejected(tiny_config):
    data = bytearray(encode_checkpoint(init_params(tiny_config)))
    data[len(data) // 2] ^= 0xFF
    with pytest.raises(CheckpointError, match="checksum"):
        decode_checkpoint(bytes(data))


def test_bad_magic_rejected(tiny_config):
    data = encode_checkpoint(init_params(tiny_config))
    with pytest.raises(CheckpointError, match="magic"):
        decode_checkpoint(b"NOTACKPT" + data[8:])
    with pytest.raises(CheckpointError, match="magic"):
        decode_checkpoint(b"")


def test_version_mismatch_rejected(tiny_config):
    data = encode_checkpoint(init_params(tiny_config))
    body = data[:-32]
    offset = len(CHECKPOINT_MAGIC)
    body = body[:offset] + struct.pack("<I", 99) + body[offset + 4:]
    with pytest.raises(CheckpointError, match="version 99"):
        decode_checkpoint(with_digest(body))


def test_trailing_bytes_rejected(tiny_config):
    data = encode_checkpoint(init_params(tiny_config))
    with pytest.raises(CheckpointError, match="trailing"):
        decode_checkpoint(with_digest(data[:-32] + b"\x00"))


def test_config_and_tensors_must_agree(tiny_config):
    params = init_params(tiny_config)
    other = tiny_config.model_copy(update={"hidden_dim": 16, "mlp_dim": 32})
    with pytest.raises(CheckpointError, match="does not match"):
        decode_checkpoint(encode_checkpoint(params, other))


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="missing.ckpt"):
        load_checkpoint(tmp_path / "missing.ckpt")
