"""Central finite-difference checks for analytic gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from app.tensor import ops
from app.tensor.tensor import Tensor, backward, no_grad

Function = Callable[..., Tensor]


def numerical_gradient(fn: Function, inputs: Sequence[Tensor], index: int, h: float = 1e-5) -> np.ndarray:
    """d fn(*inputs) / d inputs[index] by central differences; ``fn`` must return a scalar."""
    target = inputs[index]
    base = target.numpy()
    grad = np.zeros_like(base)
    with no_grad():
        for position in np.ndindex(base.shape):
            shifted = base.copy()
            shifted[position] += h
            target.assign(shifted)
            upper = fn(*inputs).item()
            shifted[position] -= 2 * h
            target.assign(shifted)
            lower = fn(*inputs).item()
            grad[position] = (upper - lower) / (2 * h)
    target.assign(base)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def gradcheck(
    fn: Function,
    inputs: Sequence[Tensor],
    *,
    h: float = 1e-5,
    tolerance: float = 1e-5,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare backward() against finite differences for every tracked input.

    Non-scalar outputs are reduced with a fixed random projection so every
    output element contributes. Returns the worst relative error; raises
    AssertionError when it exceeds ``tolerance``.
    """
    rng = rng or np.random.default_rng(0)
    probe = fn(*inputs)
    weights = None if probe.size == 1 and probe.ndim <= 1 else Tensor(rng.standard_normal(probe.shape))

    def scalar_fn(*args: Tensor) -> Tensor:
        out = fn(*args)
        return out if weights is None else ops.sum(ops.mul(out, weights))

    for tensor in inputs:
        tensor.zero_grad()
    backward(scalar_fn(*inputs))

    worst = 0.0
    for index, tensor in enumerate(inputs):
        if not tensor.requires_grad:
            continue
        analytic = tensor.grad if tensor.grad is not None else np.zeros(tensor.shape)
        numeric = numerical_gradient(scalar_fn, inputs, index, h)
        error = relative_error(analytic, numeric)
        worst = max(worst, error)
        if error >= tolerance:
            raise AssertionError(f"gradient mismatch on input {index} {tensor.shape}: relative error {error:.3e}")
    return worst
