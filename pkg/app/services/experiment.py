"""
Comparative experiment: the three strategies on identical corpora and initializations.

For every seed the corpus, the split and the initial weights depend only on that seed,
so strategies trained under the same seed differ only in their objective.
"""
import logging
import time
import tracemalloc
from concurrent.futures import ProcessPoolExecutor
from typing import List, Tuple

from ..config import MIN_RECOMMENDED_SEEDS, STRATEGIES
from ..errors import DimensionMismatchError, ExperimentRunError, LabError
from ..models import (
    ComparisonReport,
    ExperimentConfig,
    OverheadReport,
    OverheadRow,
    Strategy,
    StrategySeedResult,
    TrainingRunConfig,
)
from .datagen import Corpus, generate_corpus, split_corpus
from .numerics import derive_seed
from .retrieval.metrics import evaluate
from .training.trainer import train

logger = logging.getLogger(__name__)

# Orderings checked by `compare --assert-ordering`.
ASSERTED_VERDICTS = ("median_mrv_kcl_le_cacl", "median_mrv_cacl_le_mlclap", "mean_r1_kcl_ge_mlclap")


def seed_corpus(cfg: ExperimentConfig, seed: int) -> Corpus:
    """The tagged corpus shared by every strategy run under this seed."""
    corpus = generate_corpus(cfg.corpus.model_copy(update={"seed": derive_seed(seed, "corpus")}))
    return split_corpus(corpus, cfg.split, derive_seed(seed, "split"))


def run_strategy(cfg: ExperimentConfig, strategy: Strategy, seed: int) -> StrategySeedResult:
    try:
        corpus = seed_corpus(cfg, seed)
        train_split = corpus.subset("train")
        eval_split = corpus.subset(cfg.eval_split)
        if train_split.n_instances == 0 or eval_split.n_instances == 0:
            raise DimensionMismatchError(f"empty train or {cfg.eval_split} split for N={corpus.n_instances}")
        params, log = train(strategy, train_split, cfg.run_config(), seed)
        metrics = evaluate(params, eval_split)
    except ExperimentRunError:
        raise
    except (LabError, ArithmeticError, ValueError) as exc:
        logger.error(f"Run failed for strategy={strategy} seed={seed}: {exc}")
        raise ExperimentRunError(str(exc), strategy, seed) from exc
    curve = [epoch.loss for epoch in log.epochs]
    return StrategySeedResult(strategy=strategy, seed=seed, final_loss=curve[-1], loss_curve=curve, metrics=metrics)


def _run_task(task: Tuple[ExperimentConfig, Strategy, int]) -> StrategySeedResult:
    cfg, strategy, seed = task
    return run_strategy(cfg, strategy, seed)


def run_comparison(cfg: ExperimentConfig, jobs: int = 1) -> ComparisonReport:
    report = ComparisonReport(n_languages=cfg.corpus.n_languages, seeds=list(cfg.seeds))
    if len(cfg.seeds) < MIN_RECOMMENDED_SEEDS:
        message = f"only {len(cfg.seeds)} seeds; at least {MIN_RECOMMENDED_SEEDS} are recommended for median verdicts"
        logger.warning(message)
        report.warnings.append(message)

    strategies: List[Strategy] = [s for s in STRATEGIES if s in cfg.strategies]
    if cfg.corpus.n_languages < 2:
        if "cacl" in strategies:
            strategies.remove("cacl")
            report.skipped["cacl"] = "co-anchor training needs at least two languages"
        message = "a single language makes the strategies coincide; every ordering verdict is False"
        logger.warning(message)
        report.warnings.append(message)

    tasks = [(cfg, strategy, seed) for seed in cfg.seeds for strategy in strategies]
    logger.info(f"Running {len(tasks)} training runs ({len(strategies)} strategies x {len(cfg.seeds)} seeds) with {jobs} worker(s)")
    if jobs <= 1:
        results = [_run_task(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(_run_task, tasks))
    report.results.extend(results)

    for name, verdict in report.verdicts.items():
        logger.info(f"Verdict {name}: {verdict}")
    return report


def _seconds_per_epoch(strategy: Strategy, corpus: Corpus, run_cfg: TrainingRunConfig, seed: int, repeats: int) -> float:
    """Best of `repeats` timed runs, after an untimed one-epoch run absorbs first-call costs."""
    train(strategy, corpus, run_cfg.model_copy(update={"epochs": 1}), seed)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        train(strategy, corpus, run_cfg, seed)
        best = min(best, time.perf_counter() - start)
    return best / run_cfg.epochs


def overhead_report(cfg: ExperimentConfig, repeats: int = 3) -> OverheadReport:
    """Texts encoded, wall-clock seconds and peak traced allocation per training epoch for each strategy."""
    if repeats < 1:
        raise ValueError(f"repeats must be at least 1, got {repeats}")
    corpus = generate_corpus(cfg.corpus)
    run_cfg = cfg.run_config()
    report = OverheadReport(n_instances=corpus.n_instances, n_languages=corpus.n_languages)
    seed = cfg.seeds[0]
    for strategy in [s for s in STRATEGIES if s in cfg.strategies]:
        if strategy == "cacl" and corpus.n_languages < 2:
            logger.warning("Skipping co-anchor overhead: needs at least two languages")
            continue
        seconds = _seconds_per_epoch(strategy, corpus, run_cfg, seed, repeats)
        # memory is traced on a separate, untimed epoch
        tracemalloc.start()
        _, log = train(strategy, corpus, run_cfg.model_copy(update={"epochs": 1}), seed)
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        report.rows.append(
            OverheadRow(
                strategy=strategy,
                texts_per_epoch=log.epochs[0].texts_encoded,
                wall_clock_seconds=seconds,
                peak_bytes=peak,
            )
        )
        logger.info(f"{strategy}: {log.epochs[0].texts_encoded} texts per epoch, {seconds:.4f}s per epoch")
    return report
