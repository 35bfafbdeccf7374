import logging

from ...models import GradCheckConfig, GradCheckSuite
from ..datagen import generate_corpus
from ..encoders import init_params
from ..numerics import derive_seed, rng_stream
from .losses import PLAN_MODE, draw_plan, grad_check

logger = logging.getLogger(__name__)


def run_grad_checks(cfg: GradCheckConfig) -> GradCheckSuite:
    """Finite-difference check of every configured loss on a fresh random batch per seed."""
    suite = GradCheckSuite(tolerance=cfg.tolerance)
    for seed in cfg.seeds:
        corpus = generate_corpus(cfg.corpus.model_copy(update={"seed": derive_seed(seed, "corpus")}))
        params = init_params(derive_seed(seed, "init"), cfg.encoder.for_corpus(corpus.d_audio, corpus.d_text))
        plan_rng = rng_stream(seed, "plan")
        for loss_name in cfg.losses:
            mode = PLAN_MODE[loss_name]
            if mode == "cacl" and corpus.n_languages < 2:
                logger.warning("Skipping the co-anchor gradient check: needs at least two languages")
                continue
            plan = draw_plan(plan_rng, corpus.n_instances, corpus.n_languages, mode) if mode else None
            report = grad_check(loss_name, params, corpus, plan, cfg.loss, cfg.epsilon)
            suite.reports.append(report.model_copy(update={"seed": seed}))
    level = logging.INFO if suite.passed else logging.WARNING
    logger.log(level, f"Gradient checks: worst relative error {suite.worst_rel_error:.3e} (tolerance {cfg.tolerance:g})")
    return suite
