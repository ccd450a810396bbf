from __future__ import annotations

import math
from pathlib import Path
from typing import Any, List, Literal, Optional, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from raed.utils.errors import ConfigError

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib  # type: ignore


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RelaxationConfig(_Section):
    """Relaxed attention: (1 - gamma) * G + gamma * uniform, encoder-decoder attention only."""

    gamma: float = Field(0.0, ge=0.0, le=1.0)
    mode: Literal["fixed", "learned"] = "fixed"
    # learned mode: initial gamma of the logistic-squashed per-block scalar
    learned_init: float = Field(0.1, gt=0.0, lt=1.0)
    applied_in_training_only: Literal[True] = True
    dropout_order: Literal["relax_then_dropout", "dropout_then_relax"] = "relax_then_dropout"
    # tempered-softmax ablation; 1.0 disables it
    temperature: float = Field(1.0, gt=0.0)


class FrontendConfig(_Section):
    feature_dim: int = Field(16, ge=1)
    channels: List[int] = Field(default_factory=lambda: [32, 32, 32, 32])
    kernel_size: Literal[3] = 3
    strides: List[int] = Field(default_factory=lambda: [1, 2, 1, 2])

    @model_validator(mode="after")
    def _check(self) -> "FrontendConfig":
        if len(self.channels) != len(self.strides):
            raise ValueError("channels and strides must have the same length")
        if any(c < 1 for c in self.channels):
            raise ValueError("channel counts must be positive")
        if math.prod(self.strides) != 4:
            raise ValueError("total temporal subsampling must be 4")
        return self

    @property
    def subsampling(self) -> int:
        return math.prod(self.strides)

    def reduced_feature_dim(self) -> int:
        f = self.feature_dim
        for s in self.strides:
            f = -(-f // s)
        return f


class TransformerConfig(_Section):
    # zero encoder blocks is only meant for tests
    encoder_blocks: int = Field(4, ge=0)
    decoder_blocks: int = Field(2, ge=1)
    d_model: int = Field(64, ge=1)
    heads: int = Field(4, ge=1)
    dropout: float = Field(0.1, ge=0.0, lt=1.0)
    attention_dropout: float = Field(0.1, ge=0.0, lt=1.0)
    vocab_size: int = Field(22, ge=3)
    max_positions: int = Field(512, ge=1)
    relaxation: Optional[RelaxationConfig] = None

    @model_validator(mode="after")
    def _check(self) -> "TransformerConfig":
        if self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        return self

    @property
    def ff_dim(self) -> int:
        return 4 * self.d_model


class LasConfig(_Section):
    encoder_dim: int = Field(64, ge=2)
    attention_dim: int = Field(32, ge=1)
    decoder_dim: int = Field(32, ge=1)
    embed_dim: int = Field(32, ge=1)
    encoder_blocks: int = Field(3, ge=1)
    decoder_blocks: int = Field(3, ge=1)
    bidirectional: bool = True
    dropout: float = Field(0.1, ge=0.0, lt=1.0)
    vocab_size: int = Field(22, ge=3)
    relaxation: Optional[RelaxationConfig] = None

    @model_validator(mode="after")
    def _check(self) -> "LasConfig":
        if self.bidirectional and self.encoder_dim % 2:
            raise ValueError("bidirectional encoder_dim must be even")
        return self


class ModelConfig(_Section):
    arch: Literal["transformer", "las"] = "transformer"
    seed: int = 0
    frontend: FrontendConfig = Field(default_factory=FrontendConfig)
    transformer: TransformerConfig = Field(default_factory=TransformerConfig)
    las: LasConfig = Field(default_factory=LasConfig)

    @property
    def vocab_size(self) -> int:
        return self.transformer.vocab_size if self.arch == "transformer" else self.las.vocab_size

    @property
    def relaxation(self) -> Optional[RelaxationConfig]:
        return self.transformer.relaxation if self.arch == "transformer" else self.las.relaxation

    def with_vocab(self, vocab_size: int, feature_dim: int) -> "ModelConfig":
        return self.model_copy(
            update={
                "frontend": self.frontend.model_copy(update={"feature_dim": feature_dim}),
                "transformer": self.transformer.model_copy(update={"vocab_size": vocab_size}),
                "las": self.las.model_copy(update={"vocab_size": vocab_size}),
            }
        )

    def with_relaxation(self, relaxation: Optional[RelaxationConfig]) -> "ModelConfig":
        return self.model_copy(
            update={
                "transformer": self.transformer.model_copy(update={"relaxation": relaxation}),
                "las": self.las.model_copy(update={"relaxation": relaxation}),
            }
        )


class TrainConfig(_Section):
    epochs: int = Field(30, ge=1)
    batch_size: int = Field(16, ge=1)
    peak_lr: float = Field(1e-3, gt=0.0)
    init_lr_scale: float = Field(0.01, gt=0.0, le=1.0)
    final_lr_scale: float = Field(0.01, gt=0.0, le=1.0)
    warmup_frac: float = Field(0.1, ge=0.0, le=1.0)
    hold_frac: float = Field(0.4, ge=0.0, le=1.0)
    decay_frac: float = Field(0.5, ge=0.0, le=1.0)
    label_smoothing: float = Field(0.05, ge=0.0, lt=1.0)
    # overrides the architecture dropout when set
    dropout: Optional[float] = Field(None, ge=0.0, lt=1.0)
    adam_beta1: float = Field(0.9, ge=0.0, lt=1.0)
    adam_beta2: float = Field(0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(1e-8, gt=0.0)
    grad_clip: Optional[float] = Field(5.0, gt=0.0)
    spec_augment: bool = False
    time_masks: int = Field(2, ge=0)
    time_mask_width: int = Field(20, ge=0)
    freq_masks: int = Field(2, ge=0)
    freq_mask_width: int = Field(10, ge=0)
    seed: int = 0
    selection_metric: Literal["ter", "wer_lm"] = "ter"

    @model_validator(mode="after")
    def _check(self) -> "TrainConfig":
        total = self.warmup_frac + self.hold_frac + self.decay_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"schedule fractions must sum to 1, got {total}")
        return self


class FusionConfig(_Section):
    lm_weight: float = Field(0.9, ge=0.0)
    beam: int = Field(4, ge=1)
    max_beam: int = Field(256, ge=1)
    # None disables the EOS rule
    eos_factor: Optional[float] = Field(None, ge=1.0)
    max_len_ratio: float = Field(1.0, gt=0.0)
    normalize_length: bool = True
    nbest: int = Field(1, ge=1)
    use_lm: bool = True


class LmConfig(_Section):
    embed_dim: int = Field(32, ge=1)
    hidden_dim: int = Field(64, ge=1)
    epochs: int = Field(10, ge=1)
    batch_size: int = Field(32, ge=1)
    lr: float = Field(3e-3, gt=0.0)
    grad_clip: Optional[float] = Field(5.0, gt=0.0)
    heldout_frac: float = Field(0.1, ge=0.0, lt=1.0)
    seed: int = 0


class ToyTaskSpec(_Section):
    vocab_size: int = Field(20, ge=2)
    frames_per_token: int = Field(6, ge=1)
    jitter: int = Field(1, ge=0)
    feature_dim: int = Field(16, ge=1)
    noise_sigma: float = Field(0.3, ge=0.0)
    min_len: int = Field(4, ge=1)
    max_len: int = Field(12, ge=1)
    n_train: int = Field(2000, ge=1)
    n_dev: int = Field(200, ge=1)
    n_test: int = Field(200, ge=1)
    # Dirichlet concentration of bigram rows; small values give peaked rows
    grammar_concentration: float = Field(0.3, gt=0.0)
    min_prototype_distance: float = Field(2.0, ge=0.0)
    prototype_retries: int = Field(10, ge=1)
    workers: int = Field(1, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check(self) -> "ToyTaskSpec":
        if self.min_len > self.max_len:
            raise ValueError("min_len must not exceed max_len")
        if self.jitter >= self.frames_per_token:
            raise ValueError("jitter must be smaller than frames_per_token")
        return self


class GridConfig(_Section):
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    gammas: List[float] = Field(default_factory=lambda: [0.0, 0.2, 0.35])


class ExperimentConfig(_Section):
    model: ModelConfig = Field(default_factory=ModelConfig)
    relaxation: Optional[RelaxationConfig] = None
    train: TrainConfig = Field(default_factory=TrainConfig)
    fusion: FusionConfig = Field(default_factory=FusionConfig)
    lm: LmConfig = Field(default_factory=LmConfig)
    data: ToyTaskSpec = Field(default_factory=ToyTaskSpec)
    grid: GridConfig = Field(default_factory=GridConfig)

    def resolve_model(self, vocab_size: int, feature_dim: int) -> ModelConfig:
        """Model config with data-derived sizes and the experiment relaxation applied."""
        cfg = self.model.with_vocab(vocab_size, feature_dim)
        if self.relaxation is not None:
            cfg = cfg.with_relaxation(self.relaxation)
        if self.train.dropout is not None:
            p = self.train.dropout
            cfg = cfg.model_copy(
                update={
                    "transformer": cfg.transformer.model_copy(update={"dropout": p}),
                    "las": cfg.las.model_copy(update={"dropout": p}),
                }
            )
        return cfg


def _regroup(raw: dict) -> dict:
    # [frontend]/[transformer]/[las] are written as top-level sections in the file
    raw = dict(raw)
    model = dict(raw.pop("model", {}))
    for key in ("frontend", "transformer", "las"):
        if key in raw:
            model[key] = raw.pop(key)
    if model:
        raw["model"] = model
    return raw


def parse_config(raw: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(_regroup(raw))
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise ConfigError(f"{where}: {first['msg']}") from e


def load_config(path: Optional[str | Path]) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = tomllib.loads(p.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{p}: {e}") from e
    return parse_config(raw)


S = TypeVar("S", bound=BaseModel)


def override(section: S, **update: Any) -> S:
    """Copy of `section` with the non-None values of `update` applied and
    re-validated; command-line flags go through here."""
    update = {k: v for k, v in update.items() if v is not None}
    if not update:
        return section
    try:
        return type(section).model_validate({**section.model_dump(), **update})
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise ConfigError(f"{where}: {first['msg']}") from e
