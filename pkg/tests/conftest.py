"""Shared fixtures: seeded generators, tiny model configs and a tiny dataset."""

from typing import Callable, Optional

import numpy as np
import pytest

from raed.config.schema import (
    FrontendConfig,
    LasConfig,
    ModelConfig,
    RelaxationConfig,
    ToyTaskSpec,
    TransformerConfig,
)
from raed.data.toy_task import generate_dataset
from raed.tensor import set_debug_checks

# Vocabulary.toy(5): <pad>, <eos>, _, a, b, c, d
TINY_VOCAB = 7
TINY_FEATURES = 8


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


@pytest.fixture
def debug_checks():
    set_debug_checks(True)
    yield
    set_debug_checks(False)


def tiny_model_config(
    arch: str = "transformer",
    relaxation: Optional[RelaxationConfig] = None,
    *,
    encoder_blocks: int = 1,
    bidirectional: bool = True,
    dropout: float = 0.0,
) -> ModelConfig:
    return ModelConfig(
        arch=arch,
        seed=7,
        frontend=FrontendConfig(feature_dim=TINY_FEATURES, channels=[4, 4, 4, 4]),
        transformer=TransformerConfig(
            encoder_blocks=encoder_blocks,
            decoder_blocks=2,
            d_model=8,
            heads=2,
            dropout=dropout,
            attention_dropout=dropout,
            vocab_size=TINY_VOCAB,
            max_positions=64,
            relaxation=relaxation,
        ),
        las=LasConfig(
            encoder_dim=8,
            attention_dim=6,
            decoder_dim=6,
            embed_dim=5,
            encoder_blocks=max(encoder_blocks, 1),
            decoder_blocks=3,
            bidirectional=bidirectional,
            dropout=dropout,
            vocab_size=TINY_VOCAB,
            relaxation=relaxation,
        ),
    )


@pytest.fixture
def make_model_config() -> Callable[..., ModelConfig]:
    return tiny_model_config


def tiny_task_spec(**overrides) -> ToyTaskSpec:
    values = dict(
        vocab_size=5,
        frames_per_token=4,
        jitter=1,
        feature_dim=TINY_FEATURES,
        noise_sigma=0.3,
        min_len=2,
        max_len=4,
        n_train=24,
        n_dev=6,
        n_test=6,
        min_prototype_distance=1.0,
        seed=3,
    )
    values.update(overrides)
    return ToyTaskSpec(**values)


@pytest.fixture
def make_task_spec() -> Callable[..., ToyTaskSpec]:
    return tiny_task_spec


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """gen-data output for the tiny task: manifests, RAFX files, references."""
    out = tmp_path_factory.mktemp("tiny_data")
    generate_dataset(tiny_task_spec(), out)
    return out
