import numpy as np
import pytest

from app.errors import BoundInputError, ConfigError
from app.models import BoundConfig, EncoderArch, LossConfig, OptimizerConfig
from app.services.encoders import init_params
from app.services.numerics import rng_stream
from app.services.theory.bound import (
    adam_momentum_error_check,
    bound_rhs,
    estimate_lipschitz,
    estimate_lipschitz_fn,
    g_max,
    momentum_bound_rhs,
    recheck_trace,
    twin_train,
)
from app.services.training.losses import draw_plan, pair_loss_grads

from .helpers import build_corpus, constant_params


def _unrolled(prev, eta, a, g, dist):
    error = prev
    for value in g:
        error = a * error + eta * dist * value
    return error


class TestBoundRecursion:
    def test_no_distribution_error(self):
        assert bound_rhs(0.0, 0.1, 3, 1.5, [1.0, 2.0, 3.0], 0.0) == 0.0

    def test_single_step(self):
        assert bound_rhs(0.0, 0.1, 1, 1.2, [2.0], 0.5) == pytest.approx(0.1 * 0.5 * 2.0, abs=1e-15)

    def test_matches_step_by_step_recursion(self, rng):
        for _ in range(20):
            steps = int(rng.integers(1, 8))
            g = rng.uniform(0, 3, size=steps)
            args = (float(rng.uniform(0, 1)), float(rng.uniform(0, 0.1)), float(rng.uniform(1, 2)), float(rng.uniform(0, 2)))
            prev, eta, a, dist = args
            assert bound_rhs(prev, eta, steps, a, g, dist) == pytest.approx(_unrolled(prev, eta, a, g, dist), rel=1e-12)

    def test_monotone_in_every_input(self, rng):
        for _ in range(20):
            g = rng.uniform(0, 2, size=3)
            base = dict(prev_error=0.3, eta=0.05, steps=3, a=1.2, g_max_seq=g, dist_error=0.4)
            value = bound_rhs(**base)
            for key, bigger in (("prev_error", 0.5), ("eta", 0.06), ("a", 1.3), ("dist_error", 0.9), ("g_max_seq", g + 0.1)):
                assert bound_rhs(**{**base, key: bigger}) >= value

    @pytest.mark.parametrize(
        "args",
        [
            (0.0, 0.1, 2, 0.9, [1.0, 1.0], 0.1),
            (-1.0, 0.1, 2, 1.1, [1.0, 1.0], 0.1),
            (0.0, 0.1, 2, 1.1, [1.0], 0.1),
            (0.0, 0.1, 0, 1.1, [], 0.1),
            (0.0, 0.1, 2, 1.1, [1.0, -1.0], 0.1),
        ],
    )
    def test_invalid_inputs(self, args):
        with pytest.raises(BoundInputError):
            bound_rhs(*args)

    def test_momentum_recursion(self):
        value = momentum_bound_rhs(0.9, 0.2, 3.0, 0.1, 2.0, 0.5)
        assert value == pytest.approx(0.9 * 0.2 + 0.1 * (3.0 * 0.1 + 2.0 * 0.5), abs=1e-15)
        with pytest.raises(BoundInputError):
            momentum_bound_rhs(1.0, 0.0, 0.0, 0.0, 0.0, 0.0)


class TestEstimators:
    def test_constant_gradient_has_zero_lipschitz(self, rng):
        estimate = estimate_lipschitz_fn(lambda w: np.ones((2, 4)), np.zeros(4), 8, 1e-3, rng)
        assert estimate.lambda_max == 0.0

    def test_quadratic_recovers_curvature(self, rng):
        c = 3.7
        estimate = estimate_lipschitz_fn(lambda w: (c * w)[None, :], rng.normal(size=6), 16, 1e-4, rng)
        assert estimate.lambda_max == pytest.approx(c, rel=0.05)

    def test_invalid_sample_count(self, rng):
        with pytest.raises(BoundInputError):
            estimate_lipschitz_fn(lambda w: w[None, :], np.zeros(2), 0, 1e-4, rng)

    def test_pair_gradient_estimate_is_seeded(self, small_corpus, small_params):
        first = estimate_lipschitz(small_params, small_corpus, LossConfig(tau=0.5), 4, 1e-4, seed=3)
        second = estimate_lipschitz(small_params, small_corpus, LossConfig(tau=0.5), 4, 1e-4, seed=3)
        assert first == second
        assert first.lambda_max > 0.0
        assert first.n_samples == 4

    def test_g_max_is_largest_pair_gradient(self):
        corpus = build_corpus(0, n=3, k=2)
        params = init_params(0, EncoderArch(d_audio=5, d_text=5, d_embed=4))
        _, grads = pair_loss_grads(params, corpus, LossConfig(tau=0.5))
        expected = max(float(np.sqrt(np.sum(row * row))) for row in grads)
        assert g_max(params, corpus, LossConfig(tau=0.5)) == pytest.approx(expected, rel=1e-12)

    def test_g_max_vanishes_when_embeddings_coincide(self, small_arch):
        corpus = build_corpus(0, n=4, k=2)
        assert g_max(constant_params(small_arch), corpus, LossConfig()) < 1e-12


class TestTwinTraining:
    SMALL_BOUND = BoundConfig(epochs=2, steps_per_epoch=2, lipschitz_samples=4)

    @pytest.mark.parametrize("seed", range(5))
    def test_bound_holds_on_default_setup(self, seed):
        corpus = build_corpus(seed, n=16, k=4, d_audio=12, d_text=12, d_latent=8)
        arch = EncoderArch(d_audio=12, d_text=12, d_embed=8)
        opt = OptimizerConfig(eta=1e-3, clip_norm=1.0)
        trace = twin_train(corpus, arch, opt, LossConfig(), BoundConfig(), seed)
        assert len(trace.records) == 5
        assert trace.passed
        for record in trace.records:
            assert record.measured_error <= record.bound_rhs * (1 + 1e-9) + 1e-12
            assert 0.0 <= record.distribution_error <= 2.0
            assert record.a >= 1.0

    def test_single_language_has_zero_error(self):
        corpus = build_corpus(1, n=6, k=1)
        trace = twin_train(
            corpus, EncoderArch(d_audio=5, d_text=5, d_embed=4), OptimizerConfig(eta=1e-2), LossConfig(), self.SMALL_BOUND, 1
        )
        assert all(record.measured_error == 0.0 for record in trace.records)
        assert all(record.distribution_error == 0.0 for record in trace.records)
        assert trace.passed

    def test_zero_learning_rate(self):
        corpus = build_corpus(2, n=6, k=3)
        trace = twin_train(
            corpus, EncoderArch(d_audio=5, d_text=5, d_embed=4), OptimizerConfig(eta=0.0), LossConfig(), self.SMALL_BOUND, 2
        )
        assert all(record.measured_error == 0.0 and record.bound_rhs == 0.0 for record in trace.records)

    def test_adam_is_rejected(self, small_corpus, small_arch):
        with pytest.raises(ConfigError):
            twin_train(small_corpus, small_arch, OptimizerConfig(kind="adam"), LossConfig(), self.SMALL_BOUND, 0)

    def test_trace_records_each_epoch_plan(self, small_corpus, small_arch):
        trace = twin_train(small_corpus, small_arch, OptimizerConfig(eta=1e-2), LossConfig(), self.SMALL_BOUND, 5)
        plan_rng = rng_stream(5, "plan")
        for record in trace.records:
            expected = draw_plan(plan_rng, small_corpus.n_instances, small_corpus.n_languages, "baseline")
            assert record.plan == expected.q.tolist()

    def test_recheck_flags_tampered_record(self, small_corpus, small_arch):
        trace = twin_train(small_corpus, small_arch, OptimizerConfig(eta=1e-2), LossConfig(), self.SMALL_BOUND, 0)
        assert recheck_trace(trace).passed
        records = list(trace.records)
        records[0] = records[0].model_copy(update={"measured_error": records[0].bound_rhs * 2 + 1.0})
        rechecked = recheck_trace(trace.model_copy(update={"records": records}))
        assert not rechecked.passed
        assert rechecked.records[0].violated


class TestMomentumCheck:
    def test_single_language_has_zero_momentum_error(self):
        corpus = build_corpus(0, n=6, k=1)
        report = adam_momentum_error_check(
            corpus, EncoderArch(d_audio=5, d_text=5, d_embed=4), OptimizerConfig(kind="adam"), LossConfig(), 0, steps=2
        )
        assert all(step.measured_error == 0.0 for step in report.steps)
        assert report.passed

    @pytest.mark.parametrize("seed", range(10))
    def test_bound_holds(self, seed):
        corpus = build_corpus(seed, n=8, k=3, d_audio=6, d_text=6)
        report = adam_momentum_error_check(
            corpus,
            EncoderArch(d_audio=6, d_text=6, d_embed=4),
            OptimizerConfig(kind="adam", eta=1e-3),
            LossConfig(),
            seed,
            steps=2,
            lipschitz_samples=4,
        )
        assert report.passed
        first = report.steps[0]
        assert first.weight_error == 0.0
        assert first.rhs == pytest.approx((1 - 0.9) * first.g_max * first.distribution_error, rel=1e-12)

    def test_sgd_is_rejected(self, small_corpus, small_arch):
        with pytest.raises(ConfigError):
            adam_momentum_error_check(small_corpus, small_arch, OptimizerConfig(), LossConfig(), 0)
