import numpy as np
import pytest

from app.errors import InvalidPlanError, SupportMismatchError
from app.models import EncoderArch, LossConfig
from app.services.encoders import encode_audio, encode_text, init_params
from app.services.numerics import cosine_sim
from app.services.theory.distributions import (
    DistributionSnapshot,
    distribution_error,
    epoch_distribution,
    joint_distribution,
    kcl_epoch_distribution_error,
    zero_extend,
)
from app.services.training.losses import constant_plan, draw_plan

from .helpers import build_corpus, constant_params, raw_corpus


class TestJointDistribution:
    def test_uniform_similarities(self, small_arch):
        corpus = build_corpus(0, n=4, k=3)
        p = joint_distribution(constant_params(small_arch), corpus, LossConfig())
        np.testing.assert_allclose(p.mass, np.full(12, 1 / 12), atol=1e-15)

    def test_single_pair(self, small_params, rng):
        corpus = raw_corpus(rng.normal(size=(1, 5)), rng.normal(size=(1, 1, 5)))
        p = joint_distribution(small_params, corpus, LossConfig())
        np.testing.assert_array_equal(p.mass, [1.0])
        np.testing.assert_array_equal(p.support, [[0, 0]])

    def test_matches_direct_computation(self, small_params):
        corpus = build_corpus(4, n=2, k=2)
        tau = 0.3
        p = joint_distribution(small_params, corpus, LossConfig(tau=tau))
        scores = [
            cosine_sim(encode_audio(small_params, corpus.audio[i]), encode_text(small_params, corpus.text[i, k]))
            for i in range(2)
            for k in range(2)
        ]
        weights = np.exp(np.array(scores) / tau)
        np.testing.assert_allclose(p.mass, weights / weights.sum(), atol=1e-12)
        np.testing.assert_array_equal(p.support, [[0, 0], [0, 1], [1, 0], [1, 1]])

    def test_masses_sum_to_one(self, small_corpus, small_params):
        p = joint_distribution(small_params, small_corpus, LossConfig(tau=0.07))
        assert p.mass.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(p.mass > 0)


class TestEpochDistribution:
    def test_uniform_similarities(self, small_arch, rng):
        corpus = build_corpus(0, n=4, k=3)
        pe = epoch_distribution(constant_params(small_arch), corpus, draw_plan(rng, 4, 3, "baseline"), LossConfig())
        np.testing.assert_allclose(pe.mass, np.full(4, 0.25), atol=1e-15)

    def test_single_language_equals_joint(self, small_params):
        corpus = build_corpus(1, n=5, k=1)
        p = joint_distribution(small_params, corpus, LossConfig())
        pe = epoch_distribution(small_params, corpus, constant_plan(5, 1), LossConfig())
        np.testing.assert_array_equal(pe.mass, p.mass)
        np.testing.assert_array_equal(pe.support, p.support)
        assert distribution_error(p, pe) == 0.0

    def test_support_follows_plan(self, small_corpus, small_params, rng):
        plan = draw_plan(rng, small_corpus.n_instances, small_corpus.n_languages, "baseline")
        pe = epoch_distribution(small_params, small_corpus, plan, LossConfig())
        np.testing.assert_array_equal(pe.support[:, 0], np.arange(small_corpus.n_instances))
        np.testing.assert_array_equal(pe.support[:, 1], plan.q)

    def test_plan_size_mismatch(self, small_corpus, small_params, rng):
        with pytest.raises(InvalidPlanError):
            epoch_distribution(small_params, small_corpus, draw_plan(rng, 3, 3, "baseline"), LossConfig())


class TestDistributionError:
    def test_hand_example(self):
        p = DistributionSnapshot(support=[[0, 0], [0, 1], [1, 0], [1, 1]], mass=[0.25] * 4)
        pe = DistributionSnapshot(support=[[0, 0], [1, 1]], mass=[0.5, 0.5])
        assert distribution_error(p, pe) == pytest.approx(1.0, abs=1e-15)

    def test_disjoint_mass_gives_two(self):
        p = DistributionSnapshot(support=[[0, 0], [0, 1]], mass=[1.0, 0.0])
        pe = DistributionSnapshot(support=[[0, 1]], mass=[1.0])
        assert distribution_error(p, pe) == 2.0

    def test_identical(self):
        p = DistributionSnapshot(support=[[0, 0], [1, 0]], mass=[0.3, 0.7])
        assert distribution_error(p, p) == 0.0

    def test_unknown_pair(self):
        p = DistributionSnapshot(support=[[0, 0], [1, 0]], mass=[0.5, 0.5])
        pe = DistributionSnapshot(support=[[5, 0]], mass=[1.0])
        with pytest.raises(SupportMismatchError):
            zero_extend(p, pe)

    def test_masses_must_sum_to_one(self):
        with pytest.raises(ValueError):
            DistributionSnapshot(support=[[0, 0], [1, 0]], mass=[0.5, 0.6])

    @pytest.mark.parametrize("seed", range(10))
    def test_baseline_error_in_range(self, seed):
        corpus = build_corpus(seed, n=6, k=3)
        params = init_params(seed, EncoderArch(d_audio=5, d_text=5, d_embed=4))
        plan = draw_plan(np.random.default_rng(seed), 6, 3, "baseline")
        error = distribution_error(
            joint_distribution(params, corpus, LossConfig()), epoch_distribution(params, corpus, plan, LossConfig())
        )
        assert 0.0 < error <= 2.0


@pytest.mark.parametrize("seed", range(50))
def test_kcl_epoch_error_is_zero(seed):
    rng = np.random.default_rng(seed)
    corpus = build_corpus(seed, n=int(rng.integers(2, 8)), k=int(rng.integers(1, 5)))
    params = init_params(seed + 1, EncoderArch(d_audio=5, d_text=5, d_embed=3))
    assert kcl_epoch_distribution_error(params, corpus, LossConfig(tau=float(rng.uniform(0.05, 1.0)))) == 0.0
