"""
spincool - ground-state cooling of a nanomechanical oscillator by iterated spin postselection.

Examples:
    >>> from spincool import ModelParams, Strategy, run_protocol
    >>> records = run_protocol(ModelParams(coupling=0.12, n_spins=4), Strategy.independent(4), 2)
    >>> records[-1].ratio
"""

from spincool.exceptions import (
    ConfigError,
    DomainError,
    NumericalError,
    SpinCoolError,
    VanishingBranchError,
)
from spincool.physics.lindblad import run_protocol_open
from spincool.physics.optimizer import evaluate_target, optimize_target
from spincool.physics.protocol import IterationRecord, Strategy, run_protocol, sweep_ratio
from spincool.schema.params import LindbladRates, ModelParams, OptimizeConfig, RunConfig

__version__ = "0.1.0"
__all__ = [
    "ConfigError",
    "DomainError",
    "IterationRecord",
    "LindbladRates",
    "ModelParams",
    "NumericalError",
    "OptimizeConfig",
    "RunConfig",
    "SpinCoolError",
    "Strategy",
    "VanishingBranchError",
    "evaluate_target",
    "optimize_target",
    "run_protocol",
    "run_protocol_open",
    "sweep_ratio",
]
