"""Adam and RectifiedAdam update rules over named parameters."""
from __future__ import annotations

import math
from collections.abc import Mapping, MutableMapping
from dataclasses import dataclass, field

import numpy as np

from app.core.errors import ShapeError, TrainingError
from app.schemas.train import OptimizerVariant
from app.tensor.tensor import Tensor

# Below this approximated SMA length the variance of the adaptive rate is intractable.
RHO_THRESHOLD = 4.0


@dataclass
class OptimState:
    variant: OptimizerVariant
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def create_optim_state(
    params: Mapping[str, Tensor],
    variant: OptimizerVariant | str,
    lr: float,
    *,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> OptimState:
    return OptimState(
        variant=OptimizerVariant(variant),
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        m={name: np.zeros(p.shape) for name, p in params.items()},
        v={name: np.zeros(p.shape) for name, p in params.items()},
    )


def rectification(t: int, beta2: float) -> tuple[float, float | None]:
    """Return (rho_t, r_t); r_t is None when rho_t <= 4 and the update stays un-adapted."""
    rho_inf = 2.0 / (1.0 - beta2) - 1.0
    beta2_t = beta2 ** t
    rho_t = rho_inf - 2.0 * t * beta2_t / (1.0 - beta2_t)
    if rho_t <= RHO_THRESHOLD:
        return rho_t, None
    r_t = math.sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
    return rho_t, r_t


def compute_updates(
    grads: Mapping[str, np.ndarray],
    state: OptimState,
    *,
    rectify: bool = True,
) -> dict[str, np.ndarray]:
    """Advance the moment estimates by one step and return the update for each gradient.

    ``rectify=False`` makes RectifiedAdam take the adaptive branch with
    r_t = 1 at every step, which reduces it to Adam.
    """
    for name, grad in grads.items():
        if name not in state.m:
            raise ShapeError(f"no optimizer state for parameter {name}")
        if grad.shape != state.m[name].shape:
            raise ShapeError(f"gradient for {name} has shape {grad.shape}, expected {state.m[name].shape}")

    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** t
    correction2 = 1.0 - b2 ** t

    adaptive = True
    scale = 1.0
    if state.variant is OptimizerVariant.RECTIFIED_ADAM and rectify:
        _, r_t = rectification(t, b2)
        adaptive = r_t is not None
        scale = r_t if adaptive else 1.0

    updates: dict[str, np.ndarray] = {}
    for name, grad in grads.items():
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * grad
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * grad * grad
        m_hat = state.m[name] / correction1
        if adaptive:
            v_hat = state.v[name] / correction2
            updates[name] = state.lr * scale * m_hat / (np.sqrt(v_hat) + state.eps)
        else:
            updates[name] = state.lr * m_hat
    return updates


def apply_updates(params: MutableMapping[str, Tensor] | Mapping[str, Tensor], updates: Mapping[str, np.ndarray]) -> None:
    for name, update in updates.items():
        params[name].assign(params[name].data - update)


def _step(params, grads, state, variant: OptimizerVariant, rectify: bool = True):
    if state.variant is not variant:
        raise TrainingError(f"optimizer state is {state.variant.value}, not {variant.value}")
    for name, grad in grads.items():
        if params[name].shape != grad.shape:
            raise ShapeError(f"gradient for {name} has shape {grad.shape}, parameter has {params[name].shape}")
    apply_updates(params, compute_updates(grads, state, rectify=rectify))
    return params


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: OptimState):
    return _step(params, grads, state, OptimizerVariant.ADAM)


def radam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: OptimState,
    *,
    rectify: bool = True,
):
    return _step(params, grads, state, OptimizerVariant.RECTIFIED_ADAM, rectify)


def optimizer_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: OptimState):
    if state.variant is OptimizerVariant.ADAM:
        return adam_step(params, grads, state)
    return radam_step(params, grads, state)
