import numpy as np

from app.models import CorpusConfig, EncoderArch
from app.services.datagen import Corpus, generate_corpus, language_names
from app.services.encoders import EncoderParams, make_params


def build_corpus(seed: int, n: int, k: int, d_audio: int = 5, d_text: int = 5, d_latent: int = 4) -> Corpus:
    return generate_corpus(
        CorpusConfig(n_instances=n, n_languages=k, d_latent=d_latent, d_audio=d_audio, d_text=d_text, seed=seed)
    )


def constant_params(arch: EncoderArch) -> EncoderParams:
    """Zero weights and unit biases: every audio and text embedding is the same vector."""
    audio = [(np.zeros((out, inp)), np.ones(out)) for out, inp in arch.layer_shapes("audio")]
    text = [(np.zeros((out, inp)), np.ones(out)) for out, inp in arch.layer_shapes("text")]
    return make_params(arch, audio, text)


def identity_params(d: int) -> EncoderParams:
    arch = EncoderArch(d_audio=d, d_text=d, d_embed=d)
    return make_params(arch, [(np.eye(d), np.zeros(d))], [(np.eye(d), np.zeros(d))])


def raw_corpus(audio, text, split=None) -> Corpus:
    text = np.asarray(text, dtype=np.float64)
    return Corpus(
        audio=np.asarray(audio, dtype=np.float64), text=text, language_names=language_names(text.shape[1]), split=split
    )
