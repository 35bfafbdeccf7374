"""Shallow projection heads f_theta (audio) and g_phi (text) with hand-written backward passes."""
import logging
from dataclasses import dataclass
from typing import List, Literal, Sequence, Tuple

import numpy as np

from ..errors import DimensionMismatchError
from ..models import EncoderArch

logger = logging.getLogger(__name__)

Layer = Tuple[np.ndarray, np.ndarray]  # (W of shape (fan_out, fan_in), b of shape (fan_out,))
Modality = Literal["audio", "text"]


@dataclass(frozen=True)
class EncoderParams:
    arch: EncoderArch
    audio: Tuple[Layer, ...]
    text: Tuple[Layer, ...]

    def head(self, modality: Modality) -> Tuple[Layer, ...]:
        return self.audio if modality == "audio" else self.text

    def flatten(self) -> np.ndarray:
        """theta followed by phi; each layer contributes W (row-major) then b."""
        parts = [np.concatenate([w.ravel(), b]) for w, b in self.audio + self.text]
        return np.concatenate(parts)


@dataclass
class HeadCache:
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]


def _check_layers(arch: EncoderArch, modality: Modality, layers: Sequence[Layer]) -> Tuple[Layer, ...]:
    shapes = arch.layer_shapes(modality)
    if len(layers) != len(shapes):
        raise DimensionMismatchError(f"{modality} head needs {len(shapes)} layers, got {len(layers)}")
    checked = []
    for (out, inp), (w, b) in zip(shapes, layers):
        w = np.array(w, dtype=np.float64)
        b = np.array(b, dtype=np.float64)
        if w.shape != (out, inp) or b.shape != (out,):
            raise DimensionMismatchError(
                f"{modality} layer expects W{(out, inp)} and b({out},), got W{w.shape} and b{b.shape}"
            )
        w.setflags(write=False)
        b.setflags(write=False)
        checked.append((w, b))
    return tuple(checked)


def make_params(arch: EncoderArch, audio: Sequence[Layer], text: Sequence[Layer]) -> EncoderParams:
    return EncoderParams(arch=arch, audio=_check_layers(arch, "audio", audio), text=_check_layers(arch, "text", text))


def init_params(seed: int, arch: EncoderArch) -> EncoderParams:
    """Glorot-uniform weights, zero biases; deterministic in seed."""
    rng = np.random.default_rng(seed)
    heads = {}
    for modality in ("audio", "text"):
        layers = []
        for fan_out, fan_in in arch.layer_shapes(modality):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            layers.append((rng.uniform(-limit, limit, size=(fan_out, fan_in)), np.zeros(fan_out)))
        heads[modality] = layers
    logger.debug(f"Initialized encoder params with seed={seed}, {arch.param_count} parameters")
    return make_params(arch, heads["audio"], heads["text"])


def unflatten(arch: EncoderArch, w: np.ndarray) -> EncoderParams:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (arch.param_count,):
        raise DimensionMismatchError(f"Weight vector has shape {w.shape}, architecture needs ({arch.param_count},)")
    offset = 0
    heads = {}
    for modality in ("audio", "text"):
        layers = []
        for fan_out, fan_in in arch.layer_shapes(modality):
            size = fan_out * fan_in
            weights = w[offset:offset + size].reshape(fan_out, fan_in)
            offset += size
            bias = w[offset:offset + fan_out]
            offset += fan_out
            layers.append((weights, bias))
        heads[modality] = layers
    return make_params(arch, heads["audio"], heads["text"])


def head_forward(layers: Sequence[Layer], x: np.ndarray) -> Tuple[np.ndarray, HeadCache]:
    cache = HeadCache(inputs=[], pre_activations=[])
    h = x
    for index, (w, b) in enumerate(layers):
        cache.inputs.append(h)
        z = h @ w.T + b
        cache.pre_activations.append(z)
        h = np.tanh(z) if index < len(layers) - 1 else z
    return h, cache


def head_backward(layers: Sequence[Layer], cache: HeadCache, d_out: np.ndarray) -> np.ndarray:
    """Flat gradient of one head (same ordering as EncoderParams.flatten) given dL/d(outputs)."""
    grads: List[np.ndarray] = [None] * len(layers)  # type: ignore[list-item]
    delta = d_out
    for index in range(len(layers) - 1, -1, -1):
        w, _ = layers[index]
        if index < len(layers) - 1:
            delta = delta * (1.0 - np.tanh(cache.pre_activations[index]) ** 2)
        grads[index] = np.concatenate([(delta.T @ cache.inputs[index]).ravel(), delta.sum(axis=0)])
        delta = delta @ w
    return np.concatenate(grads)


def _encode_batch(params: EncoderParams, modality: Modality, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    d_in = params.arch.d_audio if modality == "audio" else params.arch.d_text
    if x.ndim != 2 or x.shape[1] != d_in:
        raise DimensionMismatchError(f"{modality} features must have shape (n, {d_in}), got {x.shape}")
    out, _ = head_forward(params.head(modality), x)
    return out


def encode_audio_batch(params: EncoderParams, x: np.ndarray) -> np.ndarray:
    return _encode_batch(params, "audio", x)


def encode_text_batch(params: EncoderParams, x: np.ndarray) -> np.ndarray:
    return _encode_batch(params, "text", x)


def encode_audio(params: EncoderParams, a: Sequence[float]) -> np.ndarray:
    return encode_audio_batch(params, np.asarray(a, dtype=np.float64)[None, :])[0]


def encode_text(params: EncoderParams, t: Sequence[float]) -> np.ndarray:
    return encode_text_batch(params, np.asarray(t, dtype=np.float64)[None, :])[0]


def weight_distance(p1: EncoderParams, p2: EncoderParams) -> float:
    if p1.arch != p2.arch:
        raise DimensionMismatchError(f"Architecture mismatch: {p1.arch} vs {p2.arch}")
    return float(np.linalg.norm(p1.flatten() - p2.flatten()))
