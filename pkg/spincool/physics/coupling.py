"""Dimensionless spin-mechanical coupling from magnetic-gradient hardware parameters."""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence

from ..exceptions import DomainError
from ..schema.params import OPERATING_RANGE

logger = logging.getLogger(__name__)

BOHR_MAGNETON = 9.274e-24  # J/T
HBAR = 1.0546e-34  # J s


def estimate_coupling(dbdz: float, mass: float, omega_m: float) -> float:
    """
    Scaled coupling lambda = mu_B * dB/dz * sqrt(hbar / (2 m omega_m^3)) / hbar.

    Args:
        dbdz: Magnetic field gradient in T/m
        mass: Oscillator mass in kg
        omega_m: Mechanical angular frequency in rad/s

    Returns:
        Dimensionless coupling in units of omega_m

    Raises:
        DomainError: If any input is not positive
    """
    for name, value in (("dbdz", dbdz), ("mass", mass), ("omega_m", omega_m)):
        if not value > 0:
            raise DomainError(f"{name} must be positive, got {value}")
    return BOHR_MAGNETON * dbdz * math.sqrt(HBAR / (2 * mass * omega_m ** 3)) / HBAR


@dataclass(frozen=True)
class CouplingEstimate:
    dbdz: float
    coupling: float
    in_operating_range: bool


def operating_range_sweep(mass: float, omega_m: float, gradients: Sequence[float]) -> List[CouplingEstimate]:
    """Coupling estimates over a list of gradients, flagged against the operating window."""
    low, high = OPERATING_RANGE
    rows = []
    for dbdz in gradients:
        coupling = estimate_coupling(dbdz, mass, omega_m)
        rows.append(CouplingEstimate(float(dbdz), coupling, low < coupling < high))
    logger.debug(f"Estimated {len(rows)} couplings for m={mass:g} kg, omega_m={omega_m:g} rad/s")
    return rows
