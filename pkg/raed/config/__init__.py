from raed.config.schema import (
    ExperimentConfig,
    FrontendConfig,
    FusionConfig,
    LasConfig,
    LmConfig,
    ModelConfig,
    RelaxationConfig,
    ToyTaskSpec,
    TrainConfig,
    TransformerConfig,
    load_config,
    override,
)

__all__ = [
    "ExperimentConfig",
    "FrontendConfig",
    "FusionConfig",
    "LasConfig",
    "LmConfig",
    "ModelConfig",
    "RelaxationConfig",
    "ToyTaskSpec",
    "TrainConfig",
    "TransformerConfig",
    "load_config",
    "override",
]
