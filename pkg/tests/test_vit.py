import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.errors import ShapeError
from app.schemas.vit import ViTConfig
from app.services.train_service import bce_loss
from app.services.vit_service import (
    ViTParams,
    add_class_and_position,
    encode_sequence,
    encoder_block,
    extract_patches,
    forward_classify,
    forward_logits,
    frozen_names,
    init_params,
    multi_head_attention,
    param_count,
    patch_embed,
    shape_table,
)
from app.tensor.gradcheck import gradcheck
from app.tensor.tensor import Tensor


def random_params(config: ViTConfig, rng, scale=0.5) -> ViTParams:
    return ViTParams.from_arrays(config, {name: rng.normal(0, scale, size=shape) for name, shape in shape_table(config)})


class TestConfig:
    def test_vit_b32_sequence_and_count(self):
        config = ViTConfig()
        assert config.num_patches == 49
        assert config.seq_len == 50
        assert param_count(config) == sum(math.prod(shape) for _, shape in shape_table(config))
        assert param_count(config) == 87_456_001

    def test_single_patch(self):
        assert ViTConfig(image_size=32, patch_size=32, hidden_dim=8, mlp_dim=16, num_heads=2).num_patches == 1

    def test_tiny_count_matches_shape_table(self):
        config = ViTConfig(image_size=32, patch_size=16, hidden_dim=8, mlp_dim=16, num_heads=2, num_layers=1)
        assert param_count(config) == sum(math.prod(shape) for _, shape in shape_table(config)) == 6825

    def test_layers_add_linearly(self, tiny_config):
        doubled = tiny_config.model_copy(update={"num_layers": 2 * tiny_config.num_layers})
        one_layer = param_count(tiny_config.model_copy(update={"num_layers": 1})) - param_count(
            tiny_config.model_copy(update={"num_layers": 0})
        )
        assert param_count(doubled) - param_count(tiny_config) == tiny_config.num_layers * one_layer

    @pytest.mark.parametrize("fields", [dict(image_size=30, patch_size=8), dict(hidden_dim=30, num_heads=4)])
    def test_divisibility_enforced(self, fields):
        with pytest.raises(ValidationError):
            ViTConfig(**{**dict(image_size=32, patch_size=8, hidden_dim=32, mlp_dim=64, num_heads=2), **fields})

    def test_init_params(self, tiny_config):
        params = init_params(tiny_config, seed=0)
        assert params.total_size() == param_count(tiny_config)
        assert np.abs(params["patch_embed.weight"].data).max() <= 0.04 + 1e-12
        assert not params["position_embeddings"].data.any()
        assert not params["class_token"].data.any()
        np.testing.assert_array_equal(params["encoder.0.ln1.gamma"].data, 1.0)
        again = init_params(tiny_config, seed=0)
        assert all(np.array_equal(params[n].data, again[n].data) for n in params)

    def test_frozen_names(self, tiny_config):
        assert frozen_names(tiny_config, 0) == set()
        names = frozen_names(tiny_config, 1)
        assert "patch_embed.weight" in names and "encoder.0.mlp.fc2.bias" in names
        assert not any(n.startswith("encoder.1.") for n in names)
        assert "head.weight" not in names


class TestEmbedding:
    def test_mean_filter_projection(self, rng):
        config = ViTConfig(image_size=8, patch_size=4, in_channels=1, hidden_dim=2, mlp_dim=4, num_heads=1, num_layers=0)
        params = init_params(config)
        params["patch_embed.weight"].assign(np.full((16, 2), 1 / 16))
        images = rng.random((2, 8, 8, 1))
        out = patch_embed(images, params, config).data
        assert out.shape == (2, 4, 2)
        expected = images[..., 0].reshape(2, 2, 4, 2, 4).mean(axis=(2, 4)).reshape(2, 4)
        np.testing.assert_allclose(out[..., 0], expected, atol=1e-12)
        np.testing.assert_allclose(out[..., 1], expected, atol=1e-12)

    def test_patch_order_is_row_major(self):
        config = ViTConfig(image_size=4, patch_size=2, in_channels=1, hidden_dim=2, mlp_dim=2, num_heads=1)
        image = np.arange(16, dtype=float).reshape(1, 4, 4, 1)
        patches = extract_patches(image, config)
        np.testing.assert_array_equal(patches[0, 1], [2, 3, 6, 7])

    def test_class_token_and_positions(self, rng, tiny_config):
        params = init_params(tiny_config)
        x = Tensor(rng.standard_normal((2, tiny_config.num_patches, tiny_config.hidden_dim)))
        seq = add_class_and_position(x, params)
        assert seq.shape == (2, tiny_config.seq_len, tiny_config.hidden_dim)
        np.testing.assert_array_equal(seq.data[:, 1:], x.data)

        params["position_embeddings"].assign(rng.standard_normal(params["position_embeddings"].shape))
        same = Tensor(np.repeat(x.data[:1], 2, axis=0))
        seq = add_class_and_position(same, params)
        np.testing.assert_array_equal(seq.data[0], seq.data[1])

    def test_wrong_image_size_rejected(self, tiny_config):
        with pytest.raises(ShapeError):
            forward_classify(np.zeros((1, 16, 16, 3)), init_params(tiny_config))


class TestEncoder:
    def test_zeroed_block_is_identity(self, rng, tiny_config):
        params = random_params(tiny_config, rng)
        layer = {name: Tensor(np.zeros(t.shape)) for name, t in params.layer(0).items()}
        x = Tensor(rng.standard_normal((2, tiny_config.seq_len, tiny_config.hidden_dim)))
        np.testing.assert_array_equal(encoder_block(x, layer, tiny_config).data, x.data)

    def test_single_token_attention_is_value_projection(self, rng, tiny_config):
        params = random_params(tiny_config, rng)
        layer = params.layer(0)
        x = Tensor(rng.standard_normal((1, 1, tiny_config.hidden_dim)))
        d = tiny_config.hidden_dim
        value = x.data @ layer["attn.qkv.weight"].data[:, 2 * d:] + layer["attn.qkv.bias"].data[2 * d:]
        expected = value @ layer["attn.out.weight"].data + layer["attn.out.bias"].data
        np.testing.assert_allclose(multi_head_attention(x, layer, tiny_config).data, expected, atol=1e-12)

    def test_hand_computed_attention(self):
        config = ViTConfig(image_size=2, patch_size=1, in_channels=1, hidden_dim=2, mlp_dim=2, num_heads=1, num_layers=1)
        wq = np.array([[1.0, 0.0], [0.0, 2.0]])
        wk = np.array([[0.5, 1.0], [1.0, 0.0]])
        wv = np.array([[1.0, -1.0], [2.0, 1.0]])
        layer = {
            "attn.qkv.weight": Tensor(np.concatenate([wq, wk, wv], axis=1)),
            "attn.qkv.bias": Tensor(np.zeros(6)),
            "attn.out.weight": Tensor(np.eye(2)),
            "attn.out.bias": Tensor(np.zeros(2)),
        }
        x = np.array([[1.0, 0.0], [0.0, 1.0]])
        q, k, v = x @ wq, x @ wk, x @ wv
        scores = q @ k.T / np.sqrt(2.0)
        weights = np.exp(scores) / np.exp(scores).sum(axis=1, keepdims=True)
        out = multi_head_attention(Tensor(x[None]), layer, config).data[0]
        np.testing.assert_allclose(out, weights @ v, atol=1e-10)

    def test_attention_rows_sum_to_one(self, rng, tiny_config):
        params = random_params(tiny_config, rng)
        maps = {}
        forward_logits(rng.random((2, 32, 32, 3)), params, attention_hook=lambda i, w: maps.__setitem__(i, w))
        assert sorted(maps) == [0, 1]
        for weights in maps.values():
            assert weights.shape == (2, tiny_config.num_heads, tiny_config.seq_len, tiny_config.seq_len)
            np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-12)

    def test_permuting_tokens_with_positions_keeps_output(self, rng, tiny_config):
        params = random_params(tiny_config, rng)
        seq = rng.standard_normal((1, tiny_config.seq_len, tiny_config.hidden_dim))
        order = np.concatenate([[0], 1 + rng.permutation(tiny_config.num_patches)])
        original = encode_sequence(Tensor(seq), params).data
        permuted = encode_sequence(Tensor(seq[:, order]), params).data
        np.testing.assert_allclose(permuted[:, 0], original[:, 0], atol=1e-10)
        np.testing.assert_allclose(permuted, original[:, order], atol=1e-10)


class TestHead:
    def test_zero_head_gives_one_half(self, rng, tiny_config):
        params = random_params(tiny_config, rng)
        params["head.weight"].assign(np.zeros((tiny_config.hidden_dim, 1)))
        params["head.bias"].assign(np.zeros(1))
        np.testing.assert_array_equal(forward_classify(rng.random((3, 32, 32, 3)), params).data, 0.5)

    def test_probabilities_and_threshold_equivalence(self, rng, tiny_config):
        params = random_params(tiny_config, rng)
        images = rng.random((6, 32, 32, 3))
        logits = forward_logits(images, params).data
        probs = forward_classify(images, params).data
        assert probs.shape == (6,)
        assert ((probs > 0) & (probs < 1)).all()
        np.testing.assert_array_equal(probs >= 0.5, logits >= 0)

    def test_samples_are_independent_of_batch(self, rng, tiny_config):
        params = random_params(tiny_config, rng)
        images = rng.random((3, 32, 32, 3))
        batched = forward_classify(images, params).data
        single = forward_classify(images[1:2], params).data
        np.testing.assert_allclose(single[0], batched[1], atol=1e-12)


def test_end_to_end_gradients(rng):
    config = ViTConfig(image_size=8, patch_size=4, in_channels=1, hidden_dim=4, mlp_dim=8, num_heads=2, num_layers=1)
    names = [name for name, _ in shape_table(config)]
    for _ in range(20):
        params = random_params(config, rng)
        images = rng.random((2, 8, 8, 1))
        labels = np.array([1.0, 0.0])

        def loss(*tensors):
            return bce_loss(forward_classify(images, ViTParams(config, dict(zip(names, tensors)))), labels)

        assert gradcheck(loss, list(params.values()), tolerance=1e-4, rng=rng) < 1e-4
