"""Parameter and configuration schemas."""
from .params import (
    EXPERIMENTS,
    OPERATING_RANGE,
    LindbladRates,
    ModelParams,
    OptimizeConfig,
    RunConfig,
)

__all__ = [
    "EXPERIMENTS",
    "OPERATING_RANGE",
    "LindbladRates",
    "ModelParams",
    "OptimizeConfig",
    "RunConfig",
]
