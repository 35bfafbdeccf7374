import numpy as np
import pytest

from app.models import EncoderArch
from app.services.datagen import Corpus
from app.services.encoders import init_params

from .helpers import build_corpus


@pytest.fixture
def small_corpus() -> Corpus:
    return build_corpus(seed=3, n=6, k=3)


@pytest.fixture
def small_arch() -> EncoderArch:
    return EncoderArch(d_audio=5, d_text=5, d_embed=4)


@pytest.fixture
def small_params(small_arch):
    return init_params(7, small_arch)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
