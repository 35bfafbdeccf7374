import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from pydantic import BaseModel

from .config import APP_DESCRIPTION, APP_ENV, APP_TITLE, APP_VERSION, DEFAULT_JOBS, DEFAULT_OUT_DIR
from .errors import AssertionFailure, ConfigError, DimensionMismatchError, LabError
from .models import (
    AdamCheckConfig,
    CorpusConfig,
    EvaluateConfig,
    ExperimentConfig,
    GenDataConfig,
    GradCheckConfig,
    RunManifest,
    TrainConfig,
    VerifyBoundConfig,
)
from .services.datagen import Corpus, generate_corpus, split_corpus
from .services.experiment import ASSERTED_VERDICTS, overhead_report, run_comparison
from .services.numerics import derive_seed
from .services.retrieval.metrics import evaluate
from .services.theory.bound import adam_momentum_error_check, recheck_trace, twin_train
from .services.training.gradcheck import run_grad_checks
from .services.training.trainer import train
from .storage.checkpoint_store import load_params, save_params
from .storage.corpus_store import load_corpus, save_corpus
from .storage.reports import (
    config_hash,
    load_config,
    read_trace_jsonl,
    utc_now,
    write_json,
    write_manifest,
    write_rows_csv,
    write_trace_jsonl,
)

logger = logging.getLogger(__name__)


@dataclass
class CommandResult:
    config: BaseModel
    seed: Optional[int] = None
    outputs: List[Path] = field(default_factory=list)
    failure: Optional[str] = None


def _require_config(args: argparse.Namespace) -> Path:
    if args.config is None:
        raise ConfigError(f"{args.command} needs --config")
    return Path(args.config)


def _override_seed(args: argparse.Namespace, seed: int) -> int:
    return seed if args.seed is None else args.seed


def _seeded_corpus(cfg: CorpusConfig, seed: int) -> Corpus:
    """Corpus drawn from the run seed's corpus stream."""
    return generate_corpus(cfg.model_copy(update={"seed": derive_seed(seed, "corpus")}))


# --- Commands ---

def cmd_gen_data(args: argparse.Namespace) -> CommandResult:
    cfg = load_config(_require_config(args), GenDataConfig)
    seed = _override_seed(args, cfg.corpus.seed)
    cfg = cfg.model_copy(update={"corpus": cfg.corpus.model_copy(update={"seed": seed})})
    corpus = split_corpus(generate_corpus(cfg.corpus), cfg.split, derive_seed(seed, "split"))
    path = save_corpus(corpus, args.out_dir / cfg.output)
    return CommandResult(config=cfg, seed=seed, outputs=[path])


def cmd_train(args: argparse.Namespace) -> CommandResult:
    cfg = load_config(_require_config(args), TrainConfig)
    seed = _override_seed(args, cfg.seed)
    cfg = cfg.model_copy(update={"seed": seed})
    corpus = load_corpus(cfg.corpus_path).subset(cfg.train_split)
    params, log = train(cfg.strategy, corpus, cfg.run_config(), seed)
    checkpoint = save_params(params, args.out_dir / cfg.checkpoint)
    loss_log = write_rows_csv(
        (epoch.model_dump() for epoch in log.epochs), args.out_dir / cfg.loss_log, ["epoch", "loss", "texts_encoded"]
    )
    return CommandResult(config=cfg, seed=seed, outputs=[checkpoint, loss_log])


def cmd_evaluate(args: argparse.Namespace) -> CommandResult:
    if args.checkpoint is None or args.corpus is None:
        raise ConfigError("evaluate needs --checkpoint and --corpus")
    cfg = load_config(args.config, EvaluateConfig) if args.config else EvaluateConfig()
    params = load_params(args.checkpoint)
    corpus = load_corpus(args.corpus)
    arch = params.arch
    if (arch.d_audio, arch.d_text) != (corpus.d_audio, corpus.d_text):
        raise DimensionMismatchError(
            f"checkpoint expects d_audio={arch.d_audio}, d_text={arch.d_text}; "
            f"corpus has d_audio={corpus.d_audio}, d_text={corpus.d_text}"
        )
    report = evaluate(params, corpus.subset(cfg.split))
    json_path = write_json(report, args.out_dir / cfg.metrics_json)
    csv_path = write_rows_csv(report.to_rows(), args.out_dir / cfg.metrics_csv, ["language", "direction", "metric", "value"])
    return CommandResult(config=cfg, outputs=[json_path, csv_path])


def cmd_verify_bound(args: argparse.Namespace) -> CommandResult:
    if args.replay is not None:
        trace = recheck_trace(read_trace_jsonl(args.replay))
        path = write_trace_jsonl(trace, args.out_dir / "bound_trace.replayed.jsonl")
        failure = None if trace.passed else f"replayed trace {args.replay} violates the weight-error bound"
        return CommandResult(config=trace, seed=trace.seed, outputs=[path], failure=failure)

    cfg = load_config(_require_config(args), VerifyBoundConfig)
    if cfg.optimizer.kind != "sgd":
        raise ConfigError(
            "verify-bound covers the SGD weight-error bound only; run `adam-check` for the Adam momentum bound"
        )
    seed = _override_seed(args, cfg.seed)
    cfg = cfg.model_copy(update={"seed": seed})
    corpus = _seeded_corpus(cfg.corpus, seed)
    arch = cfg.encoder.for_corpus(corpus.d_audio, corpus.d_text)
    trace = twin_train(corpus, arch, cfg.optimizer, cfg.loss, cfg.bound, seed)
    path = write_trace_jsonl(trace, args.out_dir / "bound_trace.jsonl")
    failure = None if trace.passed else "measured weight error exceeded the bound"
    return CommandResult(config=cfg, seed=seed, outputs=[path], failure=failure)


def cmd_adam_check(args: argparse.Namespace) -> CommandResult:
    cfg = load_config(_require_config(args), AdamCheckConfig)
    seed = _override_seed(args, cfg.seed)
    cfg = cfg.model_copy(update={"seed": seed})
    corpus = _seeded_corpus(cfg.corpus, seed)
    arch = cfg.encoder.for_corpus(corpus.d_audio, corpus.d_text)
    report = adam_momentum_error_check(
        corpus, arch, cfg.optimizer, cfg.loss, seed, cfg.steps, cfg.lipschitz_samples, cfg.perturbation_scale
    )
    path = write_json(report, args.out_dir / "adam_check.json")
    failure = None if report.passed else "measured momentum error exceeded the bound"
    return CommandResult(config=cfg, seed=seed, outputs=[path], failure=failure)


def cmd_grad_check(args: argparse.Namespace) -> CommandResult:
    cfg = load_config(_require_config(args), GradCheckConfig)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seeds": [args.seed]})
    suite = run_grad_checks(cfg)
    path = write_json(suite, args.out_dir / "grad_check.json")
    failure = None
    if not suite.passed:
        failure = f"worst relative gradient error {suite.worst_rel_error:.3e} exceeds {cfg.tolerance:g}"
    return CommandResult(config=cfg, seed=args.seed, outputs=[path], failure=failure)


def cmd_compare(args: argparse.Namespace) -> CommandResult:
    cfg = load_config(_require_config(args), ExperimentConfig)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seeds": [args.seed]})
    report = run_comparison(cfg, jobs=args.jobs)
    json_path = write_json(report, args.out_dir / "comparison.json")
    summary = write_rows_csv(report.summary_rows(), args.out_dir / "summary.csv", ["strategy", "statistic", "metric", "value"])
    curves = write_rows_csv(
        (
            {"strategy": result.strategy, "seed": result.seed, "epoch": epoch, "loss": loss}
            for result in report.results
            for epoch, loss in enumerate(result.loss_curve)
        ),
        args.out_dir / "loss_curves.csv",
        ["strategy", "seed", "epoch", "loss"],
    )
    failure = None
    if args.assert_ordering:
        failed = [name for name in ASSERTED_VERDICTS if not report.verdicts[name]]
        if failed:
            failure = f"ordering verdicts failed: {', '.join(failed)}"
    return CommandResult(config=cfg, seed=args.seed, outputs=[json_path, summary, curves], failure=failure)


def cmd_overhead(args: argparse.Namespace) -> CommandResult:
    cfg = load_config(_require_config(args), ExperimentConfig)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seeds": [args.seed]})
    report = overhead_report(cfg)
    json_path = write_json(report, args.out_dir / "overhead.json")
    csv_path = write_rows_csv(
        (row.model_dump() for row in report.rows),
        args.out_dir / "overhead.csv",
        ["strategy", "texts_per_epoch", "wall_clock_seconds", "peak_bytes"],
    )
    return CommandResult(config=cfg, seed=cfg.seeds[0], outputs=[json_path, csv_path])


COMMANDS: Dict[str, Callable[[argparse.Namespace], CommandResult]] = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "verify-bound": cmd_verify_bound,
    "adam-check": cmd_adam_check,
    "grad-check": cmd_grad_check,
    "compare": cmd_compare,
    "overhead": cmd_overhead,
}

HELP = {
    "gen-data": "Generate a synthetic multilingual corpus (GenDataConfig).",
    "train": "Train one strategy on a stored corpus (TrainConfig).",
    "evaluate": "Compute retrieval and consistency metrics for a checkpoint (EvaluateConfig, optional).",
    "verify-bound": "Twin-train under p and p'_e and check the SGD weight-error bound (VerifyBoundConfig).",
    "adam-check": "Check the first-order momentum error bound for Adam (AdamCheckConfig).",
    "grad-check": "Finite-difference check of every loss gradient (GradCheckConfig).",
    "compare": "Train all strategies over several seeds and compare them (ExperimentConfig).",
    "overhead": "Texts encoded, time and memory per epoch for each strategy (ExperimentConfig).",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config document; see configs/ for one example per command.")
    common.add_argument("--seed", type=int, default=None, help="Override the config seed (seed list for compare/grad-check).")
    common.add_argument("--out-dir", type=Path, default=Path(DEFAULT_OUT_DIR), help=f"Output directory (default: {DEFAULT_OUT_DIR}).")

    parser = argparse.ArgumentParser(prog="python -m app.main", description=f"{APP_TITLE}. {APP_DESCRIPTION}")
    parser.add_argument("--version", action="version", version=f"%(prog)s {APP_VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = subparsers.add_parser(name, parents=[common], help=HELP[name], description=HELP[name])
        if name == "evaluate":
            sub.add_argument("--checkpoint", type=Path, help="Parameter checkpoint (ALNP).")
            sub.add_argument("--corpus", type=Path, help="Corpus file (ALNC).")
        if name == "verify-bound":
            sub.add_argument("--replay", type=Path, default=None, help="Re-check a stored JSON-lines trace instead of training.")
        if name == "compare":
            sub.add_argument("--jobs", type=int, default=DEFAULT_JOBS, help=f"Parallel worker processes (default: {DEFAULT_JOBS}).")
            sub.add_argument("--assert-ordering", action="store_true", help="Exit with code 4 unless the ordering verdicts hold.")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    started_at = utc_now()
    logger.info(f"{APP_TITLE} {APP_VERSION} ({APP_ENV}): {args.command}")
    try:
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError(f"--jobs must be at least 1, got {args.jobs}")
        result = COMMANDS[args.command](args)
        manifest = RunManifest(
            command=args.command,
            config_hash=config_hash(result.config),
            seed=result.seed,
            tool_version=APP_VERSION,
            started_at=started_at,
            finished_at=utc_now(),
            outputs=[str(path) for path in result.outputs],
        )
        write_manifest(manifest, args.out_dir)
        if result.failure:
            raise AssertionFailure(result.failure)
    except LabError as exc:
        logger.error(f"{args.command} failed ({type(exc).__name__}): {exc.message}")
        return exc.exit_code
    except Exception as exc:
        logger.exception(f"{args.command} crashed: {exc}")
        return 3
    logger.info(f"{args.command} finished; outputs in {args.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
