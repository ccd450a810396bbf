from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from raed.config.schema import FrontendConfig, LasConfig, ModelConfig, TransformerConfig
from raed.models.base import AedModel
from raed.models.las import LasModel
from raed.models.transformer import TransformerModel
from raed.utils.errors import ConfigError
from raed.utils.logging import get_logger

log = get_logger(__name__)


def _frontend_count(fc: FrontendConfig, out_dim: int) -> int:
    n, in_ch = 0, 1
    for ch in fc.channels:
        n += in_ch * ch * fc.kernel_size**2 + ch
        in_ch = ch
    return n + in_ch * fc.reduced_feature_dim() * out_dim + out_dim


def _lstm_count(in_dim: int, hidden: int) -> int:
    return 4 * hidden * (in_dim + hidden) + 4 * hidden


def _learned_gamma(relax) -> int:
    return 1 if relax is not None and relax.mode == "learned" else 0


def transformer_parameter_count(fc: FrontendConfig, tc: TransformerConfig) -> int:
    d, ff, D = tc.d_model, tc.ff_dim, tc.vocab_size
    mha = 4 * (d * d + d)
    norm = 2 * d
    feed = d * ff + ff + ff * d + d
    enc = tc.encoder_blocks * (mha + 2 * norm + feed) + (norm if tc.encoder_blocks else 0)
    dec = tc.decoder_blocks * (2 * mha + 3 * norm + feed + _learned_gamma(tc.relaxation)) + norm
    return _frontend_count(fc, d) + enc + D * d + dec + d * D + D


def las_parameter_count(fc: FrontendConfig, lc: LasConfig) -> int:
    de, da, dd, D = lc.encoder_dim, lc.attention_dim, lc.decoder_dim, lc.vocab_size
    directions = 2 if lc.bidirectional else 1
    enc = lc.encoder_blocks * directions * _lstm_count(de, de // directions)
    att = dd * da + de * da + 2 * da
    dec = _lstm_count(lc.embed_dim + de, dd) + (lc.decoder_blocks - 1) * _lstm_count(dd + de, dd)
    out = (dd + de) * D + D
    return _frontend_count(fc, de) + enc + D * lc.embed_dim + att + dec + out + _learned_gamma(lc.relaxation)


@dataclass
class Architecture:
    id: str
    display_name: str
    builder: Callable[[ModelConfig, np.random.Generator], AedModel]
    count: Callable[[ModelConfig], int]


ARCHITECTURES: List[Architecture] = [
    Architecture(
        id="transformer",
        display_name="Transformer",
        builder=TransformerModel,
        count=lambda c: transformer_parameter_count(c.frontend, c.transformer),
    ),
    Architecture(
        id="las",
        display_name="Listen, attend and spell",
        builder=LasModel,
        count=lambda c: las_parameter_count(c.frontend, c.las),
    ),
]


def match_architecture(name: str) -> Optional[Architecture]:
    for arch in ARCHITECTURES:
        if arch.id == name:
            return arch
    return None


def _require(name: str) -> Architecture:
    arch = match_architecture(name)
    if arch is None:
        raise ConfigError(f"unknown architecture: {name}")
    return arch


def expected_parameter_count(config: ModelConfig) -> int:
    return _require(config.arch).count(config)


def build_model(config: ModelConfig, rng: Optional[np.random.Generator] = None) -> AedModel:
    arch = _require(config.arch)
    model = arch.builder(config, rng if rng is not None else np.random.default_rng(config.seed))
    log.info("built %s model params=%d", arch.id, model.num_parameters())
    return model
