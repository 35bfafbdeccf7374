"""
Contrastive objectives for multilingual audio-text alignment.

All three losses share one symmetric InfoNCE kernel over cosine similarities and
return exact gradients with respect to the flattened encoder weights (theta then phi).
Language indices are 0-based; language 0 is the English anchor.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Literal, Optional, Tuple

import numpy as np
from scipy.special import log_softmax

from ...errors import DimensionMismatchError, InvalidPlanError
from ...models import GradCheckReport, LossConfig
from ..datagen import Corpus
from ..encoders import EncoderParams, head_backward, head_forward, unflatten
from ..numerics import normalize_rows, normalize_rows_backward

logger = logging.getLogger(__name__)

PlanMode = Literal["baseline", "cacl"]


@dataclass(frozen=True)
class EpochLanguagePlan:
    q: np.ndarray
    mode: PlanMode
    n_languages: int

    def __post_init__(self) -> None:
        q = np.asarray(self.q, dtype=np.int64)
        low = 1 if self.mode == "cacl" else 0
        if self.mode == "cacl" and self.n_languages < 2:
            raise InvalidPlanError("co-anchor plans need at least two languages")
        if q.ndim != 1 or (q.size and (q.min() < low or q.max() >= self.n_languages)):
            raise InvalidPlanError(f"{self.mode} plan entries must lie in [{low}, {self.n_languages - 1}]")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    def __len__(self) -> int:
        return int(self.q.size)

    def take(self, indices: np.ndarray) -> "EpochLanguagePlan":
        return EpochLanguagePlan(q=self.q[indices], mode=self.mode, n_languages=self.n_languages)


def draw_plan(rng: np.random.Generator, n_instances: int, n_languages: int, mode: PlanMode) -> EpochLanguagePlan:
    """Baseline: q_i uniform over all languages. Co-anchor: q_i uniform over the non-English ones."""
    if mode == "cacl":
        if n_languages < 2:
            raise InvalidPlanError("co-anchor plans need at least two languages")
        q = rng.integers(1, n_languages, size=n_instances)
    else:
        q = rng.integers(0, n_languages, size=n_instances)
    return EpochLanguagePlan(q=q, mode=mode, n_languages=n_languages)


def constant_plan(n_instances: int, n_languages: int, language: int = 0) -> EpochLanguagePlan:
    return EpochLanguagePlan(q=np.full(n_instances, language), mode="baseline", n_languages=n_languages)


@dataclass(frozen=True)
class LossOutput:
    value: float
    grad: np.ndarray
    texts_encoded: int


# --- InfoNCE kernel ---

def _infonce_normalized(u_hat: np.ndarray, v_hat: np.ndarray, tau: float) -> Tuple[float, np.ndarray]:
    """Value and dL/dS of the two-direction InfoNCE on unit rows; S = u_hat v_hat^T."""
    s = u_hat @ v_hat.T / tau
    logp_uv = log_softmax(s, axis=1)
    logp_vu = log_softmax(s.T, axis=1)
    value = -float(np.trace(logp_uv)) - float(np.trace(logp_vu))
    eye = np.eye(s.shape[0])
    d_s = ((np.exp(logp_uv) - eye) + (np.exp(logp_vu) - eye).T) / tau
    return value, d_s


def _infonce_with_grads(u: np.ndarray, v: np.ndarray, tau: float) -> Tuple[float, np.ndarray, np.ndarray]:
    u_hat, u_norm = normalize_rows(u)
    v_hat, v_norm = normalize_rows(v)
    value, d_s = _infonce_normalized(u_hat, v_hat, tau)
    d_u = normalize_rows_backward(u_hat, u_norm, d_s @ v_hat)
    d_v = normalize_rows_backward(v_hat, v_norm, d_s.T @ u_hat)
    return value, d_u, d_v


def infonce_pair_loss(u: np.ndarray, v: np.ndarray, cfg: LossConfig) -> float:
    """Unnormalized symmetric InfoNCE between matched rows of u and v."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 2 or u.shape != v.shape or u.shape[0] < 1:
        raise DimensionMismatchError(f"InfoNCE needs two (N, d) arrays with N >= 1, got {u.shape} and {v.shape}")
    u_hat, _ = normalize_rows(u)
    v_hat, _ = normalize_rows(v)
    value, _ = _infonce_normalized(u_hat, v_hat, cfg.tau)
    return value


# --- Losses ---

def _check_plan(plan: EpochLanguagePlan, batch: Corpus, mode: PlanMode) -> None:
    if plan.mode != mode:
        raise InvalidPlanError(f"expected a {mode} plan, got {plan.mode}")
    if len(plan) != batch.n_instances or plan.n_languages != batch.n_languages:
        raise InvalidPlanError(
            f"plan covers {len(plan)} instances over {plan.n_languages} languages; "
            f"batch has {batch.n_instances} instances over {batch.n_languages}"
        )


def _gradient(params: EncoderParams, audio_cache, d_audio, text_cache, d_text) -> np.ndarray:
    return np.concatenate([
        head_backward(params.audio, audio_cache, d_audio),
        head_backward(params.text, text_cache, d_text),
    ])


def mlclap_loss(params: EncoderParams, batch: Corpus, plan: EpochLanguagePlan, cfg: LossConfig) -> LossOutput:
    """Random-language baseline: symmetric InfoNCE between audio and the sampled text, scaled by 1/(2N)."""
    _check_plan(plan, batch, "baseline")
    n = batch.n_instances
    audio_emb, audio_cache = head_forward(params.audio, batch.audio)
    text_emb, text_cache = head_forward(params.text, batch.text[np.arange(n), plan.q])
    value, d_audio, d_text = _infonce_with_grads(audio_emb, text_emb, cfg.tau)
    scale = 1.0 / (2 * n)
    grad = _gradient(params, audio_cache, d_audio, text_cache, d_text)
    return LossOutput(value=value * scale, grad=grad * scale, texts_encoded=n)


def kcl_loss(params: EncoderParams, batch: Corpus, cfg: LossConfig) -> LossOutput:
    """1-to-K: every language's texts against the audio, candidates drawn within one language, scaled by 1/(2NK)."""
    n, k = batch.n_instances, batch.n_languages
    audio_emb, audio_cache = head_forward(params.audio, batch.audio)
    # language-major stack: rows [l*N, (l+1)*N) hold language l
    text_inputs = batch.text.transpose(1, 0, 2).reshape(k * n, batch.d_text)
    text_emb, text_cache = head_forward(params.text, text_inputs)

    value = 0.0
    d_audio = np.zeros_like(audio_emb)
    d_text = np.empty_like(text_emb)
    for lang in range(k):
        rows = slice(lang * n, (lang + 1) * n)
        v, d_a, d_t = _infonce_with_grads(audio_emb, text_emb[rows], cfg.tau)
        value += v
        d_audio += d_a
        d_text[rows] = d_t
    scale = 1.0 / (2 * n * k)
    grad = _gradient(params, audio_cache, d_audio, text_cache, d_text)
    return LossOutput(value=value * scale, grad=grad * scale, texts_encoded=n * k)


def cacl_loss(params: EncoderParams, batch: Corpus, plan: EpochLanguagePlan, cfg: LossConfig) -> LossOutput:
    """Audio-English co-anchor: (audio, eng), (audio, t_q) and (eng, t_q) InfoNCE terms, scaled by 1/(6N)."""
    if batch.n_languages < 2:
        raise InvalidPlanError("co-anchor loss needs at least two languages")
    _check_plan(plan, batch, "cacl")
    n = batch.n_instances
    audio_emb, audio_cache = head_forward(params.audio, batch.audio)
    text_inputs = np.concatenate([batch.text[:, 0, :], batch.text[np.arange(n), plan.q]])
    text_emb, text_cache = head_forward(params.text, text_inputs)
    english, other = text_emb[:n], text_emb[n:]

    v_ae, d_a1, d_e1 = _infonce_with_grads(audio_emb, english, cfg.tau)
    v_at, d_a2, d_o2 = _infonce_with_grads(audio_emb, other, cfg.tau)
    v_et, d_e3, d_o3 = _infonce_with_grads(english, other, cfg.tau)

    scale = 1.0 / (6 * n)
    d_text = np.concatenate([d_e1 + d_e3, d_o2 + d_o3])
    grad = _gradient(params, audio_cache, d_a1 + d_a2, text_cache, d_text)
    return LossOutput(value=(v_ae + v_at + v_et) * scale, grad=grad * scale, texts_encoded=2 * n)


def evaluate_loss(
    name: str,
    params: EncoderParams,
    batch: Corpus,
    plan: Optional[EpochLanguagePlan],
    cfg: LossConfig,
) -> LossOutput:
    if name == "kcl":
        return kcl_loss(params, batch, cfg)
    if plan is None:
        raise InvalidPlanError(f"the {name} loss needs a language plan")
    if name == "mlclap":
        return mlclap_loss(params, batch, plan, cfg)
    if name == "cacl":
        return cacl_loss(params, batch, plan, cfg)
    raise KeyError(f"Unknown loss '{name}'")


PLAN_MODE: Dict[str, Optional[PlanMode]] = {"mlclap": "baseline", "cacl": "cacl", "kcl": None}


# --- Per-pair terms ---

def pair_loss_grads(params: EncoderParams, batch: Corpus, cfg: LossConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Contrastive negative log-probability of every matched pair (i, k) and its weight gradient.

    l_ik = -log softmax_j s(a_i, t_jk)/tau [i] - log softmax_j s(t_ik, a_j)/tau [i], so
    kcl_loss == sum(l_ik) / (2NK). Rows are ordered i-major: row i*K + k.
    """
    n, k = batch.n_instances, batch.n_languages
    audio_emb, audio_cache = head_forward(params.audio, batch.audio)
    a_hat, a_norm = normalize_rows(audio_emb)
    values = np.empty(n * k)
    grads = np.empty((n * k, params.arch.param_count))
    eye = np.eye(n)
    for lang in range(k):
        text_emb, text_cache = head_forward(params.text, batch.text[:, lang, :])
        t_hat, t_norm = normalize_rows(text_emb)
        s = a_hat @ t_hat.T / cfg.tau
        logp_a2t = log_softmax(s, axis=1)
        logp_t2a = log_softmax(s.T, axis=1)
        p_a2t, p_t2a = np.exp(logp_a2t), np.exp(logp_t2a)
        for i in range(n):
            d_s = np.zeros((n, n))
            d_s[i, :] += (p_a2t[i] - eye[i]) / cfg.tau
            d_s[:, i] += (p_t2a[i] - eye[i]) / cfg.tau
            d_audio = normalize_rows_backward(a_hat, a_norm, d_s @ t_hat)
            d_text = normalize_rows_backward(t_hat, t_norm, d_s.T @ a_hat)
            row = i * k + lang
            values[row] = -logp_a2t[i, i] - logp_t2a[i, i]
            grads[row] = _gradient(params, audio_cache, d_audio, text_cache, d_text)
    return values, grads


# --- Gradient checking ---

def check_gradient(
    fn: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    w: np.ndarray,
    epsilon: float,
) -> Tuple[float, int]:
    """Central differences against the analytic gradient; returns (max relative error, worst coordinate)."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    w = np.array(w, dtype=np.float64)
    _, analytic = fn(w)
    worst, worst_index = 0.0, -1
    for j in range(w.size):
        original = w[j]
        w[j] = original + epsilon
        f_plus, _ = fn(w)
        w[j] = original - epsilon
        f_minus, _ = fn(w)
        w[j] = original
        numeric = (f_plus - f_minus) / (2 * epsilon)
        denom = max(abs(analytic[j]), abs(numeric), 1e-8)
        rel = abs(analytic[j] - numeric) / denom
        if rel > worst:
            worst, worst_index = rel, j
    return worst, worst_index


def grad_check(
    loss_name: str,
    params: EncoderParams,
    batch: Corpus,
    plan: Optional[EpochLanguagePlan],
    cfg: LossConfig,
    epsilon: float,
) -> GradCheckReport:
    def fn(w: np.ndarray) -> Tuple[float, np.ndarray]:
        out = evaluate_loss(loss_name, unflatten(params.arch, w), batch, plan, cfg)
        return out.value, out.grad

    w = params.flatten()
    max_rel, worst_index = check_gradient(fn, w, epsilon)
    logger.info(f"Gradient check for {loss_name}: max relative error {max_rel:.3e} at coordinate {worst_index}")
    return GradCheckReport(
        loss_name=loss_name, max_rel_error=max_rel, worst_index=worst_index, n_coords=int(w.size), epsilon=epsilon
    )
