import math

import numpy as np
import pytest

from app.errors import DimensionMismatchError
from app.models import OptimizerConfig
from app.services.training.optim import AdamState, Optimizer, adam_step, clip_gradient, sgd_step


class TestSGD:
    def test_zero_gradient(self):
        w = np.array([1.0, -2.0])
        np.testing.assert_array_equal(sgd_step(w, np.zeros(2), OptimizerConfig(eta=0.1)), w)

    def test_single_step(self):
        out = sgd_step(np.zeros(2), np.array([1.0, 0.0]), OptimizerConfig(eta=0.5))
        np.testing.assert_array_equal(out, [-0.5, 0.0])

    def test_clipped_step_has_length_eta(self):
        g = np.array([6.0, 8.0])
        out = sgd_step(np.zeros(2), g, OptimizerConfig(eta=0.01, clip_norm=1.0))
        assert np.linalg.norm(out) == pytest.approx(0.01, abs=1e-12)
        np.testing.assert_allclose(out / np.linalg.norm(out), -g / 10.0, atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            sgd_step(np.zeros(3), np.zeros(2), OptimizerConfig())


class TestClipping:
    def test_short_gradient_untouched(self):
        g = np.array([0.3, 0.4])
        np.testing.assert_array_equal(clip_gradient(g, 1.0), g)
        np.testing.assert_array_equal(clip_gradient(g, None), g)

    def test_clipping_is_nonexpansive(self, rng):
        for _ in range(20):
            a, b = rng.normal(size=5) * 3, rng.normal(size=5) * 3
            assert np.linalg.norm(clip_gradient(a, 1.0) - clip_gradient(b, 1.0)) <= np.linalg.norm(a - b) + 1e-12


class TestAdam:
    def test_first_step_moves_by_eta_per_coordinate(self):
        cfg = OptimizerConfig(kind="adam", eta=0.01)
        w, state = adam_step(np.zeros(3), np.array([2.0, -0.5, 1e-3]), AdamState.fresh(3), cfg)
        assert state.t == 1
        # m_hat = g and v_hat = g^2 after one step
        expected = -0.01 * np.array([2.0, -0.5, 1e-3]) / (np.abs([2.0, -0.5, 1e-3]) + cfg.eps_adam)
        np.testing.assert_allclose(w, expected, atol=1e-12)

    def test_two_steps_against_scalar_recursion(self):
        cfg = OptimizerConfig(kind="adam", eta=0.05, beta1=0.9, beta2=0.999)
        g = np.array([0.7, -1.3])
        w, state = np.array([0.2, 0.4]), AdamState.fresh(2)
        for _ in range(2):
            w, state = adam_step(w, g, state, cfg)

        for j in range(2):
            wj, m, v = [0.2, 0.4][j], 0.0, 0.0
            for t in (1, 2):
                m = 0.9 * m + 0.1 * g[j]
                v = 0.999 * v + 0.001 * g[j] ** 2
                wj -= 0.05 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + cfg.eps_adam)
            assert w[j] == pytest.approx(wj, abs=1e-12)

    def test_zero_betas_store_raw_gradient(self):
        cfg = OptimizerConfig(kind="adam", beta1=0.0, beta2=0.0)
        g = np.array([0.5, -2.0])
        _, state = adam_step(np.zeros(2), g, AdamState.fresh(2), cfg)
        np.testing.assert_array_equal(state.m, g)
        np.testing.assert_array_equal(state.v, g * g)

    def test_state_length_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            adam_step(np.zeros(3), np.zeros(3), AdamState.fresh(2), OptimizerConfig(kind="adam"))

    def test_optimizer_wrapper_tracks_steps(self):
        opt = Optimizer(OptimizerConfig(kind="adam"), 4)
        w = np.ones(4)
        for _ in range(3):
            w = opt.step(w, np.ones(4))
        assert opt.state.t == 3
        assert np.all(w < 1.0)
        assert Optimizer(OptimizerConfig(kind="sgd"), 4).state is None
