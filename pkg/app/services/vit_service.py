"""ViT-B/32-style binary classifier built on the tensor engine.

Parameter names and shapes (D = hidden_dim, M = mlp_dim, S = seq_len,
P2C = patch_size**2 * in_channels):

    patch_embed.weight            (P2C, D)
    patch_embed.bias              (D,)
    class_token                   (D,)
    position_embeddings           (S, D)
    encoder.{i}.ln1.gamma/beta    (D,)
    encoder.{i}.attn.qkv.weight   (D, 3D)
    encoder.{i}.attn.qkv.bias     (3D,)
    encoder.{i}.attn.out.weight   (D, D)
    encoder.{i}.attn.out.bias     (D,)
    encoder.{i}.ln2.gamma/beta    (D,)
    encoder.{i}.mlp.fc1.weight    (D, M)
    encoder.{i}.mlp.fc1.bias      (M,)
    encoder.{i}.mlp.fc2.weight    (M, D)
    encoder.{i}.mlp.fc2.bias      (D,)
    final_ln.gamma/beta           (D,)
    head.weight                   (D, 1)
    head.bias                     (1,)
"""
from __future__ import annotations

import math
from collections.abc import Callable, Iterator, Mapping

import numpy as np
from scipy import stats

from app.core.errors import ShapeError
from app.schemas.vit import ViTConfig
from app.tensor import ops
from app.tensor.tensor import Tensor

AttentionHook = Callable[[int, np.ndarray], None]

INIT_STD = 0.02

EMBEDDING_PARAMS = ("patch_embed.weight", "patch_embed.bias", "class_token", "position_embeddings")


def layer_shape_table(config: ViTConfig, index: int) -> list[tuple[str, tuple[int, ...]]]:
    d, m = config.hidden_dim, config.mlp_dim
    prefix = f"encoder.{index}."
    return [
        (prefix + "ln1.gamma", (d,)),
        (prefix + "ln1.beta", (d,)),
        (prefix + "attn.qkv.weight", (d, 3 * d)),
        (prefix + "attn.qkv.bias", (3 * d,)),
        (prefix + "attn.out.weight", (d, d)),
        (prefix + "attn.out.bias", (d,)),
        (prefix + "ln2.gamma", (d,)),
        (prefix + "ln2.beta", (d,)),
        (prefix + "mlp.fc1.weight", (d, m)),
        (prefix + "mlp.fc1.bias", (m,)),
        (prefix + "mlp.fc2.weight", (m, d)),
        (prefix + "mlp.fc2.bias", (d,)),
    ]


def shape_table(config: ViTConfig) -> list[tuple[str, tuple[int, ...]]]:
    d = config.hidden_dim
    table = [
        ("patch_embed.weight", (config.patch_dim, d)),
        ("patch_embed.bias", (d,)),
        ("class_token", (d,)),
        ("position_embeddings", (config.seq_len, d)),
    ]
    for index in range(config.num_layers):
        table.extend(layer_shape_table(config, index))
    table.extend([
        ("final_ln.gamma", (d,)),
        ("final_ln.beta", (d,)),
        ("head.weight", (d, config.num_classes)),
        ("head.bias", (config.num_classes,)),
    ])
    return table


def param_count(config: ViTConfig) -> int:
    """Closed-form parameter total."""
    d, m, c = config.hidden_dim, config.mlp_dim, config.num_classes
    embedding = config.patch_dim * d + d + d + config.seq_len * d
    per_layer = 4 * d + (3 * d * d + 3 * d) + (d * d + d) + (d * m + m) + (m * d + d)
    head = 2 * d + d * c + c
    return embedding + config.num_layers * per_layer + head


class ViTParams(Mapping[str, Tensor]):
    """Named learnable arrays in shape-table order."""

    def __init__(self, config: ViTConfig, tensors: Mapping[str, Tensor]):
        expected = shape_table(config)
        if [name for name, _ in expected] != list(tensors):
            missing = {name for name, _ in expected} ^ set(tensors)
            raise ShapeError(f"parameter names do not match the shape table: {sorted(missing) or 'order differs'}")
        for name, shape in expected:
            if tensors[name].shape != shape:
                raise ShapeError(f"{name} has shape {tensors[name].shape}, expected {shape}")
        self.config = config
        self._tensors = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def layer(self, index: int) -> dict[str, Tensor]:
        prefix = f"encoder.{index}."
        return {name[len(prefix):]: t for name, t in self._tensors.items() if name.startswith(prefix)}

    def total_size(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.numpy() for name, t in self._tensors.items()}

    def zero_grad(self) -> None:
        for tensor in self._tensors.values():
            tensor.zero_grad()

    def copy(self) -> "ViTParams":
        return ViTParams.from_arrays(self.config, self.arrays())

    @classmethod
    def from_arrays(cls, config: ViTConfig, arrays: Mapping[str, np.ndarray]) -> "ViTParams":
        return cls(config, {name: Tensor(arrays[name], requires_grad=True) for name, _ in shape_table(config)})


def _truncated_normal(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    return stats.truncnorm.rvs(-2.0, 2.0, scale=INIT_STD, size=shape, random_state=rng)


def init_params(config: ViTConfig, seed: int = 0) -> ViTParams:
    """Truncated-normal (std 0.02) projections, unit LayerNorm gains, zeros elsewhere."""
    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}
    for name, shape in shape_table(config):
        if name.endswith(".weight"):
            arrays[name] = _truncated_normal(shape, rng)
        elif name.endswith(".gamma"):
            arrays[name] = np.ones(shape)
        else:
            arrays[name] = np.zeros(shape)
    return ViTParams.from_arrays(config, arrays)


def reset_head(params: ViTParams, seed: int) -> None:
    rng = np.random.default_rng(seed)
    params["head.weight"].assign(_truncated_normal(params["head.weight"].shape, rng))
    params["head.bias"].assign(np.zeros(params["head.bias"].shape))


def frozen_names(config: ViTConfig, frozen_layers: int) -> set[str]:
    """Embedding parameters plus the first ``frozen_layers`` encoder blocks."""
    if frozen_layers <= 0:
        return set()
    names = set(EMBEDDING_PARAMS)
    for index in range(min(frozen_layers, config.num_layers)):
        names.update(name for name, _ in layer_shape_table(config, index))
    return names


def extract_patches(images: np.ndarray, config: ViTConfig) -> np.ndarray:
    """(B, H, W, C) -> (B, num_patches, patch_size**2 * C), patches in row-major grid order."""
    if images.ndim != 4:
        raise ShapeError(f"expected a (batch, height, width, channels) array, got shape {images.shape}")
    batch, height, width, channels = images.shape
    if height != config.image_size or width != config.image_size or channels != config.in_channels:
        raise ShapeError(
            f"images of shape {images.shape[1:]} do not match "
            f"config ({config.image_size}, {config.image_size}, {config.in_channels})"
        )
    p, g = config.patch_size, config.grid_size
    patches = images.reshape(batch, g, p, g, p, channels).transpose(0, 1, 3, 2, 4, 5)
    return patches.reshape(batch, g * g, p * p * channels)


def patch_embed(images: np.ndarray, params: Mapping[str, Tensor], config: ViTConfig) -> Tensor:
    patches = Tensor(extract_patches(np.asarray(images, dtype=np.float64), config))
    return ops.add(ops.matmul(patches, params["patch_embed.weight"]), params["patch_embed.bias"])


def add_class_and_position(x: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    position = params["position_embeddings"]
    if x.ndim != 3 or x.shape[1] + 1 != position.shape[0] or x.shape[2] != position.shape[1]:
        raise ShapeError(f"patch embeddings {x.shape} do not fit position embeddings {position.shape}")
    batch, _, hidden = x.shape
    class_tokens = ops.repeat_batch(ops.reshape(params["class_token"], (1, hidden)), batch)
    return ops.add(ops.concat([class_tokens, x], axis=1), position)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return ops.add(ops.matmul(x, weight), bias)


def multi_head_attention(
    x: Tensor,
    layer: Mapping[str, Tensor],
    config: ViTConfig,
    *,
    layer_index: int = 0,
    attention_hook: AttentionHook | None = None,
) -> Tensor:
    """Scaled dot-product attention over ``num_heads`` subspaces of the hidden dimension."""
    batch, seq, hidden = x.shape
    heads, head_dim = config.num_heads, config.head_dim
    if heads * head_dim != hidden:
        raise ShapeError(f"{heads} heads of width {head_dim} do not cover hidden dimension {hidden}")
    qkv = linear(x, layer["attn.qkv.weight"], layer["attn.qkv.bias"])

    def split_heads(t: Tensor) -> Tensor:
        t = ops.transpose(ops.reshape(t, (batch, seq, heads, head_dim)), (0, 2, 1, 3))
        return ops.reshape(t, (batch * heads, seq, head_dim))

    q = split_heads(ops.slice_lastdim(qkv, 0, hidden))
    k = split_heads(ops.slice_lastdim(qkv, hidden, 2 * hidden))
    v = split_heads(ops.slice_lastdim(qkv, 2 * hidden, 3 * hidden))
    scores = ops.affine(ops.matmul(q, ops.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(head_dim))
    weights = ops.softmax_lastdim(scores)
    if attention_hook is not None:
        attention_hook(layer_index, weights.numpy().reshape(batch, heads, seq, seq))
    context = ops.reshape(ops.matmul(weights, v), (batch, heads, seq, head_dim))
    context = ops.reshape(ops.transpose(context, (0, 2, 1, 3)), (batch, seq, hidden))
    return linear(context, layer["attn.out.weight"], layer["attn.out.bias"])


def mlp(x: Tensor, layer: Mapping[str, Tensor]) -> Tensor:
    hidden = ops.gelu(linear(x, layer["mlp.fc1.weight"], layer["mlp.fc1.bias"]))
    return linear(hidden, layer["mlp.fc2.weight"], layer["mlp.fc2.bias"])


def encoder_block(
    x: Tensor,
    layer: Mapping[str, Tensor],
    config: ViTConfig,
    *,
    layer_index: int = 0,
    rng: np.random.Generator | None = None,
    attention_hook: AttentionHook | None = None,
) -> Tensor:
    """Pre-norm block: ``y = x + MSA(LN(x))``, then ``y + MLP(LN(y))``."""
    if x.shape[-1] != config.hidden_dim:
        raise ShapeError(f"block input width {x.shape[-1]} differs from hidden_dim {config.hidden_dim}")
    eps = config.layernorm_eps
    attended = multi_head_attention(
        ops.layernorm(x, layer["ln1.gamma"], layer["ln1.beta"], eps),
        layer,
        config,
        layer_index=layer_index,
        attention_hook=attention_hook,
    )
    y = ops.add(x, ops.dropout(attended, config.dropout, rng))
    transformed = mlp(ops.layernorm(y, layer["ln2.gamma"], layer["ln2.beta"], eps), layer)
    return ops.add(y, ops.dropout(transformed, config.dropout, rng))


def encode_sequence(
    x: Tensor,
    params: ViTParams,
    *,
    rng: np.random.Generator | None = None,
    attention_hook: AttentionHook | None = None,
) -> Tensor:
    """Encoder stack plus final LayerNorm on an embedded (B, S, D) sequence."""
    config = params.config
    x = ops.dropout(x, config.dropout, rng)
    for index in range(config.num_layers):
        x = encoder_block(x, params.layer(index), config, layer_index=index, rng=rng, attention_hook=attention_hook)
    return ops.layernorm(x, params["final_ln.gamma"], params["final_ln.beta"], config.layernorm_eps)


def classify_tokens(encoded: Tensor, params: ViTParams) -> Tensor:
    """Class-token row through the linear head: one logit per sample."""
    class_rows = ops.select(encoded, axis=1, index=0)
    logits = linear(class_rows, params["head.weight"], params["head.bias"])
    return ops.reshape(logits, (encoded.shape[0],))


def forward_logits(
    images: np.ndarray,
    params: ViTParams,
    *,
    rng: np.random.Generator | None = None,
    attention_hook: AttentionHook | None = None,
) -> Tensor:
    config = params.config
    x = add_class_and_position(patch_embed(images, params, config), params)
    return classify_tokens(encode_sequence(x, params, rng=rng, attention_hook=attention_hook), params)


def forward_classify(
    images: np.ndarray,
    params: ViTParams,
    *,
    rng: np.random.Generator | None = None,
    attention_hook: AttentionHook | None = None,
) -> Tensor:
    """Sigmoid probabilities, one per sample, of the positive (COVID) class."""
    return ops.sigmoid(forward_logits(images, params, rng=rng, attention_hook=attention_hook))
