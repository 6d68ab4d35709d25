import numpy as np
import pytest

from app.core.errors import ShapeError, TrainingError
from app.schemas.train import OptimizerVariant
from app.services.optim_service import (
    adam_step,
    compute_updates,
    create_optim_state,
    optimizer_step,
    radam_step,
    rectification,
)
from app.services.schedule_service import EarlyStopState, PlateauState, early_stop_step, plateau_step
from app.tensor.tensor import Tensor


def fresh(variant, lr=0.1, shape=(3,)):
    params = {"w": Tensor(np.ones(shape), requires_grad=True)}
    return params, create_optim_state(params, variant, lr)


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        for variant in OptimizerVariant:
            params, state = fresh(variant)
            optimizer_step(params, {"w": np.zeros(3)}, state)
            np.testing.assert_array_equal(params["w"].data, np.ones(3))
            assert state.t == 1

    def test_first_step_is_lr_times_sign(self):
        params, state = fresh(OptimizerVariant.ADAM, lr=0.1, shape=(1,))
        adam_step(params, {"w": np.ones(1)}, state)
        assert params["w"].data[0] == pytest.approx(1.0 - 0.1, abs=1e-7)

    def test_constant_gradient_update_tends_to_lr(self):
        params, state = fresh(OptimizerVariant.ADAM, lr=0.01, shape=(2,))
        grads = {"w": np.array([3.0, -0.5])}
        for _ in range(200):
            updates = compute_updates(grads, state)
        np.testing.assert_allclose(updates["w"], [0.01, -0.01], rtol=1e-6)

    def test_updates_scale_with_lr(self, rng):
        grads = [{"w": rng.standard_normal(4)} for _ in range(8)]
        for variant in OptimizerVariant:
            _, a = fresh(variant, lr=1e-3, shape=(4,))
            _, b = fresh(variant, lr=2e-3, shape=(4,))
            for g in grads:
                ua, ub = compute_updates(g, a), compute_updates(g, b)
                np.testing.assert_allclose(ub["w"], 2 * ua["w"], rtol=1e-12)

    def test_shape_mismatch_rejected(self):
        params, state = fresh(OptimizerVariant.ADAM)
        with pytest.raises(ShapeError):
            adam_step(params, {"w": np.zeros(4)}, state)

    def test_wrong_variant_rejected(self):
        params, state = fresh(OptimizerVariant.ADAM)
        with pytest.raises(TrainingError):
            radam_step(params, {"w": np.zeros(3)}, state)

    def test_subset_of_parameters(self):
        params = {"a": Tensor(np.ones(2)), "b": Tensor(np.ones(2))}
        state = create_optim_state(params, OptimizerVariant.ADAM, 0.1)
        adam_step(params, {"a": np.ones(2)}, state)
        np.testing.assert_array_equal(params["b"].data, np.ones(2))
        assert params["a"].data[0] < 1.0


class TestRectifiedAdam:
    @pytest.mark.parametrize("t", [1, 2, 3, 4])
    def test_early_steps_are_unadapted(self, t):
        rho_t, r_t = rectification(t, 0.999)
        assert rho_t <= 4 and r_t is None

    def test_step_five_adapts(self):
        rho_t, r_t = rectification(5, 0.999)
        assert rho_t > 4 and 0 < r_t < 1

    def test_unadapted_update_is_momentum(self):
        params, state = fresh(OptimizerVariant.RECTIFIED_ADAM, lr=0.1)
        radam_step(params, {"w": np.full(3, 2.0)}, state)
        np.testing.assert_allclose(params["w"].data, 1.0 - 0.1 * 2.0)

    def test_ratio_to_adam_tends_to_one(self, rng):
        _, adam = fresh(OptimizerVariant.ADAM, lr=1e-3, shape=(4,))
        _, radam = fresh(OptimizerVariant.RECTIFIED_ADAM, lr=1e-3, shape=(4,))
        for _ in range(10_000):
            g = {"w": rng.standard_normal(4)}
            ua, ur = compute_updates(g, adam), compute_updates(g, radam)
        np.testing.assert_allclose(ur["w"] / ua["w"], 1.0, atol=1e-3)
        assert rectification(10_000, 0.999)[1] == pytest.approx(1.0, abs=1e-3)

    def test_disabling_rectification_reduces_to_adam(self, rng):
        adam_params, adam = fresh(OptimizerVariant.ADAM, lr=1e-2, shape=(5,))
        radam_params, radam = fresh(OptimizerVariant.RECTIFIED_ADAM, lr=1e-2, shape=(5,))
        for _ in range(12):
            g = {"w": rng.standard_normal(5)}
            adam_step(adam_params, g, adam)
            radam_step(radam_params, g, radam, rectify=False)
        np.testing.assert_allclose(radam_params["w"].data, adam_params["w"].data, rtol=0, atol=1e-12)


class TestPlateau:
    def test_improving_trace_keeps_lr(self):
        state = PlateauState()
        lrs = [plateau_step(state, metric, 1e-4) for metric in np.linspace(0.5, 0.9, 10)]
        assert lrs == [1e-4] * 10

    def test_flat_trace(self):
        state = PlateauState(factor=0.2, patience=3, min_lr=1e-7)
        lr, trace = 1e-4, []
        for _ in range(9):
            lr = plateau_step(state, 0.9, lr)
            trace.append(lr)
        assert trace == pytest.approx([1e-4] * 4 + [2e-5] * 4 + [4e-6], rel=1e-12)

    def test_improvement_resets_counter(self):
        state = PlateauState(patience=3)
        lr = 1e-4
        for metric in [0.8, 0.8, 0.8, 0.85, 0.85, 0.85, 0.85]:
            lr = plateau_step(state, metric, lr)
        assert lr == 1e-4
        assert state.epochs_since_improvement == 3

    def test_floor(self):
        state = PlateauState(factor=0.2, patience=0, min_lr=1e-7)
        lr = 3e-7
        plateau_step(state, 0.5, lr)
        lr = plateau_step(state, 0.5, lr)
        assert lr == 1e-7
        assert plateau_step(state, 0.5, lr) == 1e-7
        assert plateau_step(PlateauState(patience=0, best=1.0), 0.5, 0.0) == 0.0

    def test_non_finite_metric_rejected(self):
        with pytest.raises(ValueError):
            plateau_step(PlateauState(), float("nan"), 1e-4)


class TestEarlyStop:
    def test_improving_trace_never_stops(self):
        state = EarlyStopState(patience=2)
        assert not any(early_stop_step(state, m) for m in np.linspace(0.1, 0.9, 20))

    def test_flat_trace_stops_at_patience_plus_one(self):
        state = EarlyStopState(patience=5)
        decisions = [early_stop_step(state, 0.7) for _ in range(8)]
        assert decisions.index(True) == 5
        assert all(decisions[5:])
