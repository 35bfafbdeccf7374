from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

from .config import DEFAULT_EPS_ADAM, DEFAULT_ETA, DEFAULT_TAU, FD_EPSILON

Strategy = Literal["mlclap", "cacl", "kcl"]
Direction = Literal["T2A", "A2T"]
SplitName = Literal["train", "val", "test"]


# --- Architecture ---

class EncoderShape(BaseModel):
    """Encoder shape chosen by the user; input dims come from the corpus."""

    d_embed: int = Field(16, ge=1, description="Dimension of the shared embedding space.")
    hidden: int = Field(0, ge=0, description="Width of the tanh hidden layer; 0 for a single affine map.")

    def for_corpus(self, d_audio: int, d_text: int) -> "EncoderArch":
        return EncoderArch(d_audio=d_audio, d_text=d_text, d_embed=self.d_embed, hidden=self.hidden)


class EncoderArch(BaseModel):
    model_config = ConfigDict(frozen=True)

    d_audio: int = Field(..., ge=1, description="Raw audio feature dimension.")
    d_text: int = Field(..., ge=1, description="Raw text feature dimension.")
    d_embed: int = Field(..., ge=1, description="Shared embedding dimension.")
    hidden: int = Field(0, ge=0, description="Hidden width (0 means depth 0).")

    @property
    def depth(self) -> int:
        return 1 if self.hidden else 0

    def layer_shapes(self, modality: Literal["audio", "text"]) -> List[Tuple[int, int]]:
        """(fan_out, fan_in) for each affine layer of one head."""
        d_in = self.d_audio if modality == "audio" else self.d_text
        if self.hidden:
            return [(self.hidden, d_in), (self.d_embed, self.hidden)]
        return [(self.d_embed, d_in)]

    def head_param_count(self, modality: Literal["audio", "text"]) -> int:
        return sum(out * inp + out for out, inp in self.layer_shapes(modality))

    @property
    def param_count(self) -> int:
        return self.head_param_count("audio") + self.head_param_count("text")


# --- Corpus ---

class CorpusConfig(BaseModel):
    n_instances: int = Field(200, ge=2, description="Number of instances N.")
    n_languages: int = Field(4, ge=1, description="Number of languages K; language 0 is English.")
    d_latent: int = Field(16, ge=1)
    d_audio: int = Field(24, ge=1)
    d_text: int = Field(24, ge=1)
    audio_noise_sigma: float = Field(0.1, ge=0)
    per_language_noise_sigma: Optional[List[float]] = Field(
        None, description="One nonnegative sigma per language; defaults to 0.1 for every language."
    )
    language_offset_scale: float = Field(0.3, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _fill_language_sigmas(self) -> "CorpusConfig":
        if self.per_language_noise_sigma is None:
            self.per_language_noise_sigma = [0.1] * self.n_languages
        if len(self.per_language_noise_sigma) != self.n_languages:
            raise ValueError(
                f"per_language_noise_sigma has {len(self.per_language_noise_sigma)} entries, "
                f"expected n_languages={self.n_languages}"
            )
        if any(s < 0 for s in self.per_language_noise_sigma):
            raise ValueError("per_language_noise_sigma entries must be nonnegative")
        return self


class SplitFractions(BaseModel):
    train: float = Field(0.8, ge=0)
    val: float = Field(0.1, ge=0)
    test: float = Field(0.1, ge=0)

    @model_validator(mode="after")
    def _sums_to_one(self) -> "SplitFractions":
        total = self.train + self.val + self.test
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {total}")
        return self

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.train, self.val, self.test)


# --- Training configuration ---

class LossConfig(BaseModel):
    tau: float = Field(DEFAULT_TAU, gt=0, description="Softmax temperature.")


class OptimizerConfig(BaseModel):
    kind: Literal["sgd", "adam"] = "sgd"
    eta: float = Field(DEFAULT_ETA, ge=0, description="Learning rate; 0 freezes the weights.")
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps_adam: float = Field(DEFAULT_EPS_ADAM, gt=0)
    clip_norm: Optional[float] = Field(None, gt=0, description="Clip the gradient to this L2 norm.")


class BoundConfig(BaseModel):
    epochs: int = Field(5, ge=1)
    steps_per_epoch: int = Field(4, ge=1, description="T, optimizer steps per epoch.")
    lipschitz_samples: int = Field(32, ge=1)
    perturbation_scale: float = Field(1e-4, gt=0)


class TrainingRunConfig(BaseModel):
    """Everything one training loop needs besides the corpus and the seed."""

    encoder: EncoderShape = Field(default_factory=EncoderShape)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    epochs: int = Field(30, ge=0)
    batch_size: Optional[int] = Field(None, ge=1, description="Mini-batch size; the whole training split when unset.")


def benchmark_corpus() -> CorpusConfig:
    """Noisy translations without language offsets, so no strategy reaches perfect retrieval."""
    return CorpusConfig(
        n_instances=200, n_languages=4, audio_noise_sigma=0.3, per_language_noise_sigma=[1.0] * 4, language_offset_scale=0.0
    )


def benchmark_split() -> SplitFractions:
    return SplitFractions(train=0.6, val=0.1, test=0.3)


class ExperimentConfig(BaseModel):
    corpus: CorpusConfig = Field(default_factory=benchmark_corpus)
    split: SplitFractions = Field(default_factory=benchmark_split)
    encoder: EncoderShape = Field(default_factory=EncoderShape)
    optimizer: OptimizerConfig = Field(default_factory=lambda: OptimizerConfig(eta=0.1))
    loss: LossConfig = Field(default_factory=LossConfig)
    strategies: List[Strategy] = Field(default_factory=lambda: ["mlclap", "cacl", "kcl"], min_length=1)
    epochs: int = Field(30, ge=1)
    seeds: List[int] = Field(default_factory=lambda: list(range(10)), min_length=1)
    eval_split: Literal["val", "test"] = "test"
    batch_size: Optional[int] = Field(16, ge=1, description="Mini-batch size; full training split when None.")

    def run_config(self) -> TrainingRunConfig:
        return TrainingRunConfig(
            encoder=self.encoder, optimizer=self.optimizer, loss=self.loss, epochs=self.epochs, batch_size=self.batch_size
        )


# --- Command documents ---

class GenDataConfig(BaseModel):
    corpus: CorpusConfig
    split: SplitFractions = Field(default_factory=SplitFractions)
    output: str = "corpus.alnc"


class TrainConfig(BaseModel):
    corpus_path: str
    strategy: Strategy = "kcl"
    encoder: EncoderShape = Field(default_factory=EncoderShape)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    epochs: int = Field(30, ge=0)
    batch_size: Optional[int] = Field(None, ge=1)
    train_split: Literal["train", "all"] = "train"
    seed: int = 0
    checkpoint: str = "params.alnp"
    loss_log: str = "loss.csv"

    def run_config(self) -> TrainingRunConfig:
        return TrainingRunConfig(
            encoder=self.encoder, optimizer=self.optimizer, loss=self.loss, epochs=self.epochs, batch_size=self.batch_size
        )


class EvaluateConfig(BaseModel):
    split: Literal["train", "val", "test", "all"] = "test"
    metrics_json: str = "metrics.json"
    metrics_csv: str = "metrics.csv"


class VerifyBoundConfig(BaseModel):
    corpus: CorpusConfig = Field(default_factory=lambda: CorpusConfig(n_instances=16, n_languages=4))
    encoder: EncoderShape = Field(default_factory=lambda: EncoderShape(d_embed=8))
    optimizer: OptimizerConfig = Field(default_factory=lambda: OptimizerConfig(eta=1e-3, clip_norm=1.0))
    loss: LossConfig = Field(default_factory=LossConfig)
    bound: BoundConfig = Field(default_factory=BoundConfig)
    seed: int = 0


class AdamCheckConfig(BaseModel):
    corpus: CorpusConfig = Field(default_factory=lambda: CorpusConfig(n_instances=8, n_languages=3))
    encoder: EncoderShape = Field(default_factory=lambda: EncoderShape(d_embed=8))
    optimizer: OptimizerConfig = Field(default_factory=lambda: OptimizerConfig(kind="adam"))
    loss: LossConfig = Field(default_factory=LossConfig)
    steps: int = Field(1, ge=1)
    lipschitz_samples: int = Field(16, ge=1)
    perturbation_scale: float = Field(1e-4, gt=0)
    seed: int = 0

    @field_validator("optimizer")
    @classmethod
    def _adam_only(cls, value: OptimizerConfig) -> OptimizerConfig:
        if value.kind != "adam":
            raise ValueError("the momentum check needs optimizer.kind = 'adam'")
        return value


class GradCheckConfig(BaseModel):
    corpus: CorpusConfig = Field(default_factory=lambda: CorpusConfig(n_instances=4, n_languages=3, d_audio=6, d_text=6))
    encoder: EncoderShape = Field(default_factory=lambda: EncoderShape(d_embed=4))
    loss: LossConfig = Field(default_factory=lambda: LossConfig(tau=0.5))
    losses: List[Strategy] = Field(default_factory=lambda: ["mlclap", "cacl", "kcl"], min_length=1)
    seeds: List[int] = Field(default_factory=lambda: list(range(20)), min_length=1)
    epsilon: float = Field(FD_EPSILON, gt=0)
    tolerance: float = Field(1e-4, gt=0)


# --- Reports ---

class TrainingEpoch(BaseModel):
    epoch: int
    loss: float
    texts_encoded: int


class TrainingLog(BaseModel):
    strategy: Strategy
    seed: int
    epochs: List[TrainingEpoch] = Field(default_factory=list)


class GradCheckReport(BaseModel):
    loss_name: str
    seed: Optional[int] = None
    max_rel_error: float
    worst_index: int
    n_coords: int
    epsilon: float


class GradCheckSuite(BaseModel):
    tolerance: float
    reports: List[GradCheckReport] = Field(default_factory=list)

    @computed_field
    @property
    def worst_rel_error(self) -> float:
        return max((report.max_rel_error for report in self.reports), default=0.0)

    @computed_field
    @property
    def passed(self) -> bool:
        return self.worst_rel_error <= self.tolerance


class LanguageMetrics(BaseModel):
    language: str
    direction: Direction
    r_at_1: float = Field(..., ge=0, le=1)
    r_at_5: float = Field(..., ge=0, le=1)
    r_at_10: float = Field(..., ge=0, le=1)
    map10: float = Field(..., ge=0, le=1)


class MetricsReport(BaseModel):
    languages: List[str]
    per_language: List[LanguageMetrics]
    average: Dict[str, Dict[str, float]] = Field(description="direction -> metric -> value averaged over languages")
    gap_norm: Dict[str, float] = Field(default_factory=dict, description="||mean(english) - mean(lang k)|| per non-English language")
    dis: Dict[str, float] = Field(default_factory=dict, description="mean ||g(t_i0) - g(t_ik)|| per non-English language")
    mrv: float = Field(..., ge=0, description="Mean rank variance of T2A ranks.")
    mrv_a2t: float = Field(..., ge=0)

    def to_rows(self) -> List[Dict[str, object]]:
        """Flat rows (language, direction, metric, value) for CSV export."""
        rows: List[Dict[str, object]] = []
        for item in self.per_language:
            for metric in ("r_at_1", "r_at_5", "r_at_10", "map10"):
                rows.append({"language": item.language, "direction": item.direction, "metric": metric, "value": getattr(item, metric)})
        for direction, values in self.average.items():
            for metric, value in values.items():
                rows.append({"language": "avg", "direction": direction, "metric": metric, "value": value})
        for language, value in self.gap_norm.items():
            rows.append({"language": language, "direction": "", "metric": "gap_norm", "value": value})
        for language, value in self.dis.items():
            rows.append({"language": language, "direction": "", "metric": "dis", "value": value})
        rows.append({"language": "all", "direction": "T2A", "metric": "mrv", "value": self.mrv})
        rows.append({"language": "all", "direction": "A2T", "metric": "mrv", "value": self.mrv_a2t})
        return rows


class BoundEpochRecord(BaseModel):
    epoch: int
    steps: int
    eta: float
    measured_error: float = Field(..., ge=0)
    prev_error: float = Field(..., ge=0)
    g_max: List[float] = Field(description="g_max at each step of the epoch, in step order.")
    lambda_hat: float = Field(..., ge=0)
    lipschitz_samples: int
    perturbation_scale: float
    a: float = Field(..., ge=1)
    distribution_error: float = Field(..., ge=0)
    bound_rhs: float = Field(..., ge=0)
    violated: bool = False
    plan: List[int] = Field(
        default_factory=list, description="Language q_i drawn for every instance this epoch, shared by both twins."
    )


class BoundTrace(BaseModel):
    seed: int
    n_instances: int
    n_languages: int
    records: List[BoundEpochRecord] = Field(default_factory=list)

    @computed_field
    @property
    def passed(self) -> bool:
        return not any(record.violated for record in self.records)


class MomentumStepRecord(BaseModel):
    step: int
    measured_error: float = Field(..., ge=0)
    prev_momentum_error: float = Field(..., ge=0)
    weight_error: float = Field(..., ge=0)
    lambda_hat: float = Field(..., ge=0)
    g_max: float = Field(..., ge=0)
    distribution_error: float = Field(..., ge=0)
    rhs: float = Field(..., ge=0)
    violated: bool = False


class AdamCheckReport(BaseModel):
    seed: int
    beta1: float
    steps: List[MomentumStepRecord] = Field(default_factory=list)

    @computed_field
    @property
    def passed(self) -> bool:
        return not any(step.violated for step in self.steps)


class StrategySeedResult(BaseModel):
    strategy: Strategy
    seed: int
    final_loss: float
    loss_curve: List[float] = Field(default_factory=list, description="Training loss per epoch.")
    metrics: MetricsReport


def _summary_metrics(report: MetricsReport) -> Dict[str, float]:
    r1 = [report.average[d]["r_at_1"] for d in ("T2A", "A2T")]
    return {
        "mrv": report.mrv,
        "avg_r1": float(np.mean(r1)),
        "avg_r1_t2a": report.average["T2A"]["r_at_1"],
        "avg_r1_a2t": report.average["A2T"]["r_at_1"],
        "avg_map10": float(np.mean([report.average[d]["map10"] for d in ("T2A", "A2T")])),
        "avg_gap": float(np.mean(list(report.gap_norm.values()))) if report.gap_norm else 0.0,
        "avg_dis": float(np.mean(list(report.dis.values()))) if report.dis else 0.0,
    }


class ComparisonReport(BaseModel):
    n_languages: int
    seeds: List[int]
    results: List[StrategySeedResult] = Field(default_factory=list)
    skipped: Dict[str, str] = Field(default_factory=dict, description="strategy -> reason it was not run")
    warnings: List[str] = Field(default_factory=list)

    def _per_strategy(self) -> Dict[str, List[Dict[str, float]]]:
        grouped: Dict[str, List[Dict[str, float]]] = {}
        for result in self.results:
            grouped.setdefault(result.strategy, []).append(_summary_metrics(result.metrics))
        return grouped

    @computed_field
    @property
    def medians(self) -> Dict[str, Dict[str, float]]:
        return {
            strategy: {key: float(np.median([row[key] for row in rows])) for key in rows[0]}
            for strategy, rows in self._per_strategy().items()
        }

    @computed_field
    @property
    def means(self) -> Dict[str, Dict[str, float]]:
        return {
            strategy: {key: float(np.mean([row[key] for row in rows])) for key in rows[0]}
            for strategy, rows in self._per_strategy().items()
        }

    @computed_field
    @property
    def verdicts(self) -> Dict[str, bool]:
        names = ["median_mrv_kcl_le_cacl", "median_mrv_cacl_le_mlclap", "mean_r1_kcl_ge_mlclap", "mean_r1_cacl_ge_mlclap"]
        medians, means = self.medians, self.means
        if self.n_languages < 2 or not all(s in medians for s in ("mlclap", "cacl", "kcl")):
            return {name: False for name in names}
        return {
            "median_mrv_kcl_le_cacl": medians["kcl"]["mrv"] <= medians["cacl"]["mrv"],
            "median_mrv_cacl_le_mlclap": medians["cacl"]["mrv"] <= medians["mlclap"]["mrv"],
            "mean_r1_kcl_ge_mlclap": means["kcl"]["avg_r1"] >= means["mlclap"]["avg_r1"],
            "mean_r1_cacl_ge_mlclap": means["cacl"]["avg_r1"] >= means["mlclap"]["avg_r1"],
        }

    @computed_field
    @property
    def relative_reduction(self) -> Dict[str, Dict[str, float]]:
        """Fractional reduction of median gap, dis and MRV against the random-language baseline."""
        medians = self.medians
        if "mlclap" not in medians:
            return {}
        base = medians["mlclap"]
        out: Dict[str, Dict[str, float]] = {}
        for strategy in ("cacl", "kcl"):
            if strategy not in medians:
                continue
            out[strategy] = {
                key: (base[key] - medians[strategy][key]) / base[key] if base[key] > 0 else 0.0
                for key in ("avg_gap", "avg_dis", "mrv")
            }
        return out

    def summary_rows(self) -> List[Dict[str, object]]:
        rows: List[Dict[str, object]] = []
        for stat_name, table in (("median", self.medians), ("mean", self.means)):
            for strategy, values in table.items():
                for metric, value in values.items():
                    rows.append({"strategy": strategy, "statistic": stat_name, "metric": metric, "value": value})
        return rows


class OverheadRow(BaseModel):
    strategy: Strategy
    texts_per_epoch: int
    wall_clock_seconds: float
    peak_bytes: int


class OverheadReport(BaseModel):
    n_instances: int
    n_languages: int
    rows: List[OverheadRow] = Field(default_factory=list)


class RunManifest(BaseModel):
    command: str
    config_hash: str
    seed: Optional[int] = None
    tool_version: str
    started_at: str
    finished_at: str
    outputs: List[str] = Field(default_factory=list)
