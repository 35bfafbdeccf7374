"""
Empirical checks of the weight-error and first-order-momentum error bounds.

Two models start from the same weights. Model A follows the full pair distribution p
(every language of every instance), model B follows the epoch distribution p'_e of the
random-language baseline. Both step on a mass-weighted sum of per-pair gradients, so
after one step

    ||w_A - w_B||  <=  (1 + eta * sum p'_e lambda) ||w_A - w_B||_prev
                       + eta * sum |p - p'_e| * g_max(w_A)

and unrolling T steps gives the epoch recursion evaluated by `bound_rhs`.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ...errors import BoundInputError, ConfigError, NumericalDivergenceError
from ...models import (
    AdamCheckReport,
    BoundConfig,
    BoundEpochRecord,
    BoundTrace,
    EncoderArch,
    LossConfig,
    MomentumStepRecord,
    OptimizerConfig,
)
from ..datagen import Corpus
from ..encoders import EncoderParams, init_params, unflatten
from ..numerics import derive_seed, rng_stream
from ..training.losses import EpochLanguagePlan, draw_plan, pair_loss_grads
from ..training.optim import AdamState, adam_step, sgd_step
from .distributions import distribution_error, epoch_distribution, joint_distribution, zero_extend

logger = logging.getLogger(__name__)

RELATIVE_SLACK = 1e-9
ABSOLUTE_SLACK = 1e-12


@dataclass(frozen=True)
class LipschitzEstimate:
    lambda_max: float
    n_samples: int
    perturbation_scale: float


def within_bound(measured: float, bound: float) -> bool:
    return measured <= bound * (1.0 + RELATIVE_SLACK) + ABSOLUTE_SLACK


# --- Lipschitz and g_max estimation ---

def estimate_lipschitz_fn(
    grad_fn: Callable[[np.ndarray], np.ndarray],
    w: np.ndarray,
    n_samples: int,
    perturbation_scale: float,
    rng: np.random.Generator,
) -> LipschitzEstimate:
    """
    Largest observed ratio ||G(w)[p] - G(w + delta)[p]|| / ||delta|| over random delta and rows p.

    grad_fn returns one gradient per row (shape (P, D)). Each delta points in a uniformly
    random direction and has norm perturbation_scale.
    """
    if n_samples < 1:
        raise BoundInputError(f"n_samples must be at least 1, got {n_samples}")
    if perturbation_scale <= 0:
        raise BoundInputError(f"perturbation_scale must be positive, got {perturbation_scale}")
    w = np.asarray(w, dtype=np.float64)
    base = np.atleast_2d(grad_fn(w))
    lam = 0.0
    for _ in range(n_samples):
        direction = rng.normal(size=w.shape)
        delta = direction * (perturbation_scale / np.linalg.norm(direction))
        moved = np.atleast_2d(grad_fn(w + delta))
        ratio = float(np.max(np.linalg.norm(base - moved, axis=1))) / float(np.linalg.norm(delta))
        lam = max(lam, ratio)
    return LipschitzEstimate(lambda_max=lam, n_samples=n_samples, perturbation_scale=perturbation_scale)


def _pair_grad_fn(arch: EncoderArch, corpus: Corpus, cfg: LossConfig) -> Callable[[np.ndarray], np.ndarray]:
    def grads(w: np.ndarray) -> np.ndarray:
        return pair_loss_grads(unflatten(arch, w), corpus, cfg)[1]

    return grads


def estimate_lipschitz(
    params: EncoderParams,
    corpus: Corpus,
    cfg: LossConfig,
    n_samples: int,
    perturbation_scale: float,
    seed: int = 0,
) -> LipschitzEstimate:
    rng = rng_stream(seed, "lipschitz")
    return estimate_lipschitz_fn(
        _pair_grad_fn(params.arch, corpus, cfg), params.flatten(), n_samples, perturbation_scale, rng
    )


def g_max(params: EncoderParams, corpus: Corpus, cfg: LossConfig) -> float:
    """Largest per-pair gradient norm at the current weights."""
    _, grads = pair_loss_grads(params, corpus, cfg)
    return float(np.max(np.linalg.norm(grads, axis=1)))


# --- Bound recursions ---

def bound_rhs(
    prev_error: float,
    eta: float,
    steps: int,
    a: float,
    g_max_seq: Sequence[float],
    dist_error: float,
) -> float:
    """
    a^T * prev_error + eta * dist_error * sum_{j=0}^{T-1} a^j * g_max[T-1-j].

    g_max_seq is in step order, so j = 0 pairs with the last step of the epoch.
    """
    if steps < 1:
        raise BoundInputError(f"steps must be at least 1, got {steps}")
    if a < 1:
        raise BoundInputError(f"coefficient a must be at least 1, got {a}")
    g = np.asarray(g_max_seq, dtype=np.float64)
    if g.shape != (steps,):
        raise BoundInputError(f"expected {steps} g_max values, got {g.size}")
    if prev_error < 0 or eta < 0 or dist_error < 0 or np.any(g < 0):
        raise BoundInputError("bound inputs must be nonnegative")
    powers = a ** np.arange(steps)
    return float(a ** steps * prev_error + eta * dist_error * np.sum(powers * g[::-1]))


def momentum_bound_rhs(
    beta1: float,
    prev_momentum_error: float,
    lam: float,
    weight_error: float,
    g_max_value: float,
    dist_error: float,
) -> float:
    """beta1 * ||m - m'||_prev + (1 - beta1) * (lambda * ||w - w'|| + g_max * sum |p - p'_e|)."""
    if not 0 <= beta1 < 1:
        raise BoundInputError(f"beta1 must lie in [0, 1), got {beta1}")
    if min(prev_momentum_error, lam, weight_error, g_max_value, dist_error) < 0:
        raise BoundInputError("momentum bound inputs must be nonnegative")
    return beta1 * prev_momentum_error + (1.0 - beta1) * (lam * weight_error + g_max_value * dist_error)


# --- Twin training ---

@dataclass(frozen=True)
class TwinStep:
    grad_full: np.ndarray
    grad_sampled: np.ndarray
    g_max: float
    dist_error: float
    observed_lambda: float
    sampled_mass: np.ndarray


def _twin_step(
    w_full: np.ndarray, w_sampled: np.ndarray, arch: EncoderArch, corpus: Corpus, plan: EpochLanguagePlan, cfg: LossConfig
) -> TwinStep:
    params_full, params_sampled = unflatten(arch, w_full), unflatten(arch, w_sampled)
    _, grads_full = pair_loss_grads(params_full, corpus, cfg)
    _, grads_sampled = pair_loss_grads(params_sampled, corpus, cfg)
    p = joint_distribution(params_full, corpus, cfg)
    pe = epoch_distribution(params_sampled, corpus, plan, cfg)
    pe_mass = zero_extend(p, pe)
    gap = float(np.linalg.norm(w_full - w_sampled))
    observed = 0.0
    if gap > 0:
        observed = float(np.max(np.linalg.norm(grads_full - grads_sampled, axis=1))) / gap
    return TwinStep(
        grad_full=p.mass @ grads_full,
        grad_sampled=pe_mass @ grads_sampled,
        g_max=float(np.max(np.linalg.norm(grads_full, axis=1))),
        dist_error=distribution_error(p, pe),
        observed_lambda=observed,
        sampled_mass=pe_mass,
    )


def _check_finite(*vectors: np.ndarray) -> None:
    for vector in vectors:
        if not np.all(np.isfinite(vector)):
            raise NumericalDivergenceError("twin weights became non-finite")


def twin_train(
    corpus: Corpus,
    arch: EncoderArch,
    opt_cfg: OptimizerConfig,
    loss_cfg: LossConfig,
    bound_cfg: BoundConfig,
    seed: int,
) -> BoundTrace:
    if opt_cfg.kind != "sgd":
        raise ConfigError("the weight-error bound holds for SGD only; use the momentum check for Adam")
    w_full = init_params(derive_seed(seed, "init"), arch).flatten()
    w_sampled = w_full.copy()
    plan_rng = rng_stream(seed, "plan")
    lipschitz_rng = rng_stream(seed, "lipschitz")
    grad_fn = _pair_grad_fn(arch, corpus, loss_cfg)
    trace = BoundTrace(seed=seed, n_instances=corpus.n_instances, n_languages=corpus.n_languages)
    prev_error = 0.0

    for epoch in range(bound_cfg.epochs):
        plan = draw_plan(plan_rng, corpus.n_instances, corpus.n_languages, "baseline")
        estimate = estimate_lipschitz_fn(
            grad_fn, w_full, bound_cfg.lipschitz_samples, bound_cfg.perturbation_scale, lipschitz_rng
        )
        g_seq, a_max, dist_max, lam_max = [], 1.0, 0.0, 0.0
        for _ in range(bound_cfg.steps_per_epoch):
            step = _twin_step(w_full, w_sampled, arch, corpus, plan, loss_cfg)
            lam = max(estimate.lambda_max, step.observed_lambda)
            a_max = max(a_max, 1.0 + opt_cfg.eta * float(np.sum(step.sampled_mass * lam)))
            dist_max = max(dist_max, step.dist_error)
            lam_max = max(lam_max, lam)
            g_seq.append(step.g_max)
            w_full = sgd_step(w_full, step.grad_full, opt_cfg)
            w_sampled = sgd_step(w_sampled, step.grad_sampled, opt_cfg)
            _check_finite(w_full, w_sampled)

        measured = float(np.linalg.norm(w_full - w_sampled))
        rhs = bound_rhs(prev_error, opt_cfg.eta, bound_cfg.steps_per_epoch, a_max, g_seq, dist_max)
        violated = not within_bound(measured, rhs)
        if violated:
            logger.warning(f"Weight-error bound violated at epoch {epoch}: measured {measured:.3e} > bound {rhs:.3e}")
        trace.records.append(
            BoundEpochRecord(
                epoch=epoch,
                steps=bound_cfg.steps_per_epoch,
                eta=opt_cfg.eta,
                measured_error=measured,
                prev_error=prev_error,
                g_max=g_seq,
                lambda_hat=lam_max,
                lipschitz_samples=estimate.n_samples,
                perturbation_scale=estimate.perturbation_scale,
                a=a_max,
                distribution_error=dist_max,
                bound_rhs=rhs,
                violated=violated,
                plan=plan.q.tolist(),
            )
        )
        prev_error = measured

    logger.info(f"Twin training seed={seed}: {len(trace.records)} epochs, passed={trace.passed}")
    return trace


def recheck_trace(trace: BoundTrace) -> BoundTrace:
    """Recompute every epoch's bound from its stored inputs and re-flag violations."""
    records = []
    for record in trace.records:
        rhs = bound_rhs(record.prev_error, record.eta, record.steps, record.a, record.g_max, record.distribution_error)
        records.append(record.model_copy(update={"bound_rhs": rhs, "violated": not within_bound(record.measured_error, rhs)}))
    return trace.model_copy(update={"records": records})


def adam_momentum_error_check(
    corpus: Corpus,
    arch: EncoderArch,
    opt_cfg: OptimizerConfig,
    loss_cfg: LossConfig,
    seed: int,
    steps: int = 1,
    lipschitz_samples: int = 16,
    perturbation_scale: float = 1e-4,
) -> AdamCheckReport:
    """
    Twin Adam runs from one init; after each step the first-moment gap must satisfy
    the momentum recursion. On the first step the weights coincide, so the bound
    reduces to (1 - beta1) * g_max * sum |p - p'_e|.
    """
    if opt_cfg.kind != "adam":
        raise ConfigError("the momentum check needs an Adam optimizer")
    w_full = init_params(derive_seed(seed, "init"), arch).flatten()
    w_sampled = w_full.copy()
    state_full, state_sampled = AdamState.fresh(w_full.size), AdamState.fresh(w_full.size)
    plan_rng = rng_stream(seed, "plan")
    lipschitz_rng = rng_stream(seed, "lipschitz")
    grad_fn = _pair_grad_fn(arch, corpus, loss_cfg)
    report = AdamCheckReport(seed=seed, beta1=opt_cfg.beta1)
    prev_momentum_error = 0.0

    for index in range(steps):
        plan = draw_plan(plan_rng, corpus.n_instances, corpus.n_languages, "baseline")
        weight_error = float(np.linalg.norm(w_full - w_sampled))
        step = _twin_step(w_full, w_sampled, arch, corpus, plan, loss_cfg)
        lam = step.observed_lambda
        if weight_error > 0:
            estimate = estimate_lipschitz_fn(grad_fn, w_full, lipschitz_samples, perturbation_scale, lipschitz_rng)
            lam = max(lam, estimate.lambda_max)
        w_full, state_full = adam_step(w_full, step.grad_full, state_full, opt_cfg)
        w_sampled, state_sampled = adam_step(w_sampled, step.grad_sampled, state_sampled, opt_cfg)
        _check_finite(w_full, w_sampled)

        measured = float(np.linalg.norm(state_full.m - state_sampled.m))
        rhs = momentum_bound_rhs(opt_cfg.beta1, prev_momentum_error, lam, weight_error, step.g_max, step.dist_error)
        violated = not within_bound(measured, rhs)
        if violated:
            logger.warning(f"Momentum bound violated at step {index}: measured {measured:.3e} > bound {rhs:.3e}")
        report.steps.append(
            MomentumStepRecord(
                step=index,
                measured_error=measured,
                prev_momentum_error=prev_momentum_error,
                weight_error=weight_error,
                lambda_hat=lam,
                g_max=step.g_max,
                distribution_error=step.dist_error,
                rhs=rhs,
                violated=violated,
            )
        )
        prev_momentum_error = measured

    logger.info(f"Momentum check seed={seed}: {steps} steps, passed={report.passed}")
    return report
