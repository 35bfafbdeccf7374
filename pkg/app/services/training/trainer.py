import logging
from typing import List, Optional, Tuple

import numpy as np

from ...errors import InvalidPlanError, NumericalDivergenceError
from ...models import Strategy, TrainingEpoch, TrainingLog, TrainingRunConfig
from ..datagen import Corpus
from ..encoders import EncoderParams, init_params, unflatten
from ..numerics import derive_seed, rng_stream
from .losses import PLAN_MODE, draw_plan, evaluate_loss
from .optim import Optimizer

logger = logging.getLogger(__name__)


def _batches(n_instances: int, batch_size: Optional[int], rng: np.random.Generator) -> List[np.ndarray]:
    if batch_size is None or batch_size >= n_instances:
        return [np.arange(n_instances)]
    order = rng.permutation(n_instances)
    return [order[start:start + batch_size] for start in range(0, n_instances, batch_size)]


def initial_params(corpus: Corpus, cfg: TrainingRunConfig, seed: int) -> EncoderParams:
    """The starting point every strategy shares for a given seed."""
    arch = cfg.encoder.for_corpus(corpus.d_audio, corpus.d_text)
    return init_params(derive_seed(seed, "init"), arch)


def train(strategy: Strategy, corpus: Corpus, cfg: TrainingRunConfig, seed: int) -> Tuple[EncoderParams, TrainingLog]:
    """
    Train one strategy on the given corpus.

    A fresh language plan is drawn every epoch for the sampling strategies. The loss
    recorded for an epoch is the instance-weighted mean of the batch losses, each taken
    before its optimizer step.
    """
    if strategy == "cacl" and corpus.n_languages < 2:
        raise InvalidPlanError("co-anchor training needs at least two languages")
    if corpus.n_instances == 0:
        raise InvalidPlanError("cannot train on an empty corpus")

    params = initial_params(corpus, cfg, seed)
    arch = params.arch
    w = params.flatten()
    optimizer = Optimizer(cfg.optimizer, arch.param_count)
    plan_rng = rng_stream(seed, "plan")
    batch_rng = rng_stream(seed, "batch")
    mode = PLAN_MODE[strategy]
    log = TrainingLog(strategy=strategy, seed=seed)

    for epoch in range(cfg.epochs):
        plan = draw_plan(plan_rng, corpus.n_instances, corpus.n_languages, mode) if mode else None
        batches = _batches(corpus.n_instances, cfg.batch_size, batch_rng)
        total, texts = 0.0, 0
        for idx in batches:
            batch = corpus if len(batches) == 1 else corpus.take(idx)
            batch_plan = None if plan is None else (plan if len(batches) == 1 else plan.take(idx))
            out = evaluate_loss(strategy, unflatten(arch, w), batch, batch_plan, cfg.loss)
            if not np.isfinite(out.value) or not np.all(np.isfinite(out.grad)):
                logger.error(f"{strategy} seed={seed}: non-finite loss at epoch {epoch}")
                raise NumericalDivergenceError(f"non-finite loss at epoch {epoch} (value={out.value})")
            w = optimizer.step(w, out.grad)
            total += out.value * len(idx)
            texts += out.texts_encoded
        loss = total / corpus.n_instances
        log.epochs.append(TrainingEpoch(epoch=epoch, loss=loss, texts_encoded=texts))
        logger.debug(f"{strategy} seed={seed} epoch {epoch}: loss={loss:.6f}")

    if not np.all(np.isfinite(w)):
        raise NumericalDivergenceError(f"{strategy} weights became non-finite")
    if log.epochs:
        logger.info(
            f"Trained {strategy} seed={seed} for {cfg.epochs} epochs: "
            f"loss {log.epochs[0].loss:.4f} -> {log.epochs[-1].loss:.4f}"
        )
    return unflatten(arch, w), log
