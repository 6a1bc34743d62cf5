"""
Parameter schemas for the spin-postselection cooling model

UNITS:
- hbar = 1 and the mechanical frequency omega_m = 1 throughout
- time is measured in radians of mechanical phase (t = pi/2 is a quarter period)
- coupling, damping and spin rates are all scaled by omega_m (dimensionless)

SPIN BASES:
- product:    2^N configurations, spin 1 is the most significant label, |up> = 0, |down> = 1
              (index 0 is all-up, index 2^N - 1 is all-down)
- collective: symmetric s = N/2 sector, index j carries S_z eigenlabel m = N/2 - j
              (index 0 is m = +N/2, the all-up Dicke state)

COUPLING CONVENTION:
- product basis:    block with n up-spins is displaced by (2n - N) * coupling * eta
- collective basis: block with label m is displaced by m * coupling * eta
  Both engines agree when coupling_collective = 2 * coupling_product.

RUN CONFIG:
RunConfig is the flat, fully resolved configuration of a CLI experiment. Every output file
carries it as a JSON sidecar so a run can be reproduced from its files alone.
"""

from __future__ import annotations

import math
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

Basis = Literal["product", "collective"]

EXPERIMENTS = (
    "fig1",
    "fig2",
    "fig3",
    "fig6",
    "collective",
    "open",
    "optimize",
    "estimate-coupling",
)

# Operating window quoted for magnetically coupled cantilevers
OPERATING_RANGE = (1e-4, 1e-1)

# Feasibility envelope for the open-system protocol
MAX_SPIN_RELAXATION = 1e-3
MAX_DEPHASING = 1e-2
MAX_MECHANICAL_DAMPING = 1e-3


#########################
# MODEL
#########################

class ModelParams(BaseModel):
    """
    Parameters of one closed-system protocol step.

    The displacement kernel eta = 1 - exp(-i t) is derived from `time` on demand.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    coupling: float = Field(0.12, ge=0.0, description="Scaled spin-mechanical coupling lambda.")
    time: float = Field(math.pi / 2, gt=0.0, le=2 * math.pi, description="Evolution time per step.")
    nbar: float = Field(10.0, ge=0.0, description="Initial thermal occupancy.")
    n_spins: int = Field(1, ge=1, description="Number of spins N.")
    fock_dim: int = Field(150, ge=2, description="Fock truncation d (levels 0..d-1).")
    basis: Basis = Field("product", description="Spin basis of the evolution engine.")

    @property
    def eta(self) -> complex:
        return 1.0 - complex(math.cos(self.time), -math.sin(self.time))

    @property
    def spin_dim(self) -> int:
        if self.basis == "collective":
            return self.n_spins + 1
        return 2 ** self.n_spins

    @property
    def in_operating_range(self) -> bool:
        low, high = OPERATING_RANGE
        return low < self.coupling < high

    def updated(self, **changes: Any) -> "ModelParams":
        """Return a validated copy with some fields replaced."""
        return ModelParams.model_validate({**self.model_dump(), **changes})


class LindbladRates(BaseModel):
    """
    Markovian noise rates, all in units of omega_m.

    nbar_bath defaults to the protocol's initial occupancy when left unset.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    gamma: float = Field(0.0, ge=0.0, description="Mechanical damping.")
    spin_relaxation: float = Field(0.0, ge=0.0, description="Spin relaxation Gamma.")
    dephasing: float = Field(0.0, ge=0.0, description="Spin pure dephasing gamma_phi.")
    nbar_bath: Optional[float] = Field(None, ge=0.0, description="Reservoir occupancy.")

    @property
    def quality_factor(self) -> float:
        return math.inf if self.gamma == 0 else 1.0 / self.gamma

    def bath_occupancy(self, params: ModelParams) -> float:
        return params.nbar if self.nbar_bath is None else self.nbar_bath

    def feasibility_warnings(self) -> List[str]:
        """Describe every rate outside the envelope where cooling is expected to survive."""
        warnings = []
        if self.spin_relaxation > MAX_SPIN_RELAXATION:
            warnings.append(
                f"spin relaxation {self.spin_relaxation:g} exceeds {MAX_SPIN_RELAXATION:g}"
            )
        if self.dephasing > MAX_DEPHASING:
            warnings.append(f"dephasing {self.dephasing:g} exceeds {MAX_DEPHASING:g}")
        if self.gamma > MAX_MECHANICAL_DAMPING:
            warnings.append(
                f"mechanical damping {self.gamma:g} exceeds {MAX_MECHANICAL_DAMPING:g} "
                f"(Q={self.quality_factor:.3g})"
            )
        return warnings


class OptimizeConfig(BaseModel):
    """Settings of the multi-start target-state search."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_spins: int = Field(2, ge=1, le=4)
    basis: Basis = "product"
    restarts: int = Field(32, ge=1)
    max_evals: int = Field(4000, ge=1)
    tol: float = Field(1e-8, gt=0.0)
    probability_floor: Optional[float] = Field(None, ge=0.0, le=1.0)
    seed: int = 0


#########################
# RUN CONFIG
#########################

class RunConfig(BaseModel):
    """Flat, fully resolved configuration of one CLI experiment."""
    model_config = ConfigDict(extra="forbid")

    experiment: Literal[EXPERIMENTS]  # type: ignore[valid-type]

    # model
    coupling: float = Field(0.12, ge=0.0)
    time: float = Field(math.pi / 2, gt=0.0, le=2 * math.pi)
    nbar: float = Field(10.0, ge=0.0)
    n_spins: int = Field(1, ge=1)
    fock_dim: int = Field(150, ge=2)
    basis: Basis = "product"
    strategy: Literal["independent", "corr2", "corr3", "collective"] = "independent"

    # protocol and sweeps
    iterations: int = Field(10, ge=1)
    spin_counts: List[int] = Field(default_factory=lambda: [1, 2, 3, 4], min_length=1)
    t_points: int = Field(64, ge=1)
    lambda_points: int = Field(61, ge=2)
    lambda_max: float = Field(0.3, gt=0.0)
    enhancement_max: int = Field(6, ge=2)

    # single-spin run set against the collective one at matched cooling
    reference_coupling: float = Field(0.12, gt=0.0)
    match_iterations: int = Field(400, ge=1)

    # open system
    gamma: float = Field(0.0, ge=0.0)
    spin_relaxation: float = Field(0.0, ge=0.0)
    dephasing: float = Field(0.0, ge=0.0)
    nbar_bath: Optional[float] = Field(None, ge=0.0)
    dt: float = Field(2 * math.pi * 1e-3, gt=0.0)
    reinitialize_spins: Optional[bool] = None

    # optimizer
    restarts: int = Field(32, ge=1)
    max_evals: int = Field(4000, ge=1)
    tol: float = Field(1e-8, gt=0.0)
    probability_floor: Optional[float] = Field(None, ge=0.0, le=1.0)
    seed: int = 0

    # coupling estimate (SI units)
    dbdz: float = Field(1e6, gt=0.0, description="Magnetic gradient in T/m.")
    mass: float = Field(1e-14, gt=0.0, description="Oscillator mass in kg.")
    omega_m: float = Field(1e6, gt=0.0, description="Mechanical angular frequency in rad/s.")

    # output
    output_format: Literal["csv", "json"] = "csv"
    out: str = "."
    jobs: int = Field(1, ge=1)

    @model_validator(mode="before")
    @classmethod
    def force_single_spin_sweep(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("experiment") == "fig1":
            data = {**data, "n_spins": 1, "basis": "product"}
        return data

    @model_validator(mode="after")
    def validate_experiment(self):
        if any(n < 1 for n in self.spin_counts):
            raise ValueError("spin_counts entries must be >= 1")
        if self.strategy == "corr2" and self.n_spins != 2:
            raise ValueError("strategy 'corr2' requires n_spins = 2")
        if self.strategy == "corr3" and self.n_spins != 3:
            raise ValueError("strategy 'corr3' requires n_spins = 3")
        if self.experiment == "optimize" and self.n_spins > 4:
            raise ValueError("optimize supports n_spins <= 4")
        if self.experiment == "open":
            if self.basis != "product":
                raise ValueError("open-system runs require the product basis")
            if self.n_spins > 4:
                raise ValueError("open-system runs support n_spins <= 4")
            if self.strategy == "collective":
                raise ValueError("open-system runs support independent, corr2 and corr3 strategies")
        if self.experiment == "collective" and self.basis != "collective":
            raise ValueError("the collective experiment requires basis = 'collective'")
        return self

    def model_params(self, **changes: Any) -> ModelParams:
        fields = {
            "coupling": self.coupling,
            "time": self.time,
            "nbar": self.nbar,
            "n_spins": self.n_spins,
            "fock_dim": self.fock_dim,
            "basis": self.basis,
        }
        fields.update(changes)
        return ModelParams.model_validate(fields)

    def lindblad_rates(self) -> LindbladRates:
        return LindbladRates(
            gamma=self.gamma,
            spin_relaxation=self.spin_relaxation,
            dephasing=self.dephasing,
            nbar_bath=self.nbar_bath,
        )

    def optimize_config(self) -> OptimizeConfig:
        return OptimizeConfig(
            n_spins=self.n_spins,
            basis=self.basis,
            restarts=self.restarts,
            max_evals=self.max_evals,
            tol=self.tol,
            probability_floor=self.probability_floor,
            seed=self.seed,
        )

    def resolved(self) -> Dict[str, Any]:
        """JSON-ready dict of every key, used for output sidecars."""
        return self.model_dump(mode="json")
