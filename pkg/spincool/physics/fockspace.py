"""
Truncated Fock-space primitives for the single mechanical mode.

Key principles:
- Levels 0..d-1; the annihilation operator is the truncated sqrt(n) superdiagonal
- Displacements are exact matrix exponentials of the truncated anti-Hermitian generator,
  so operator identities hold inside the truncation
- The top SUPPORT_MARGIN levels are never trusted; validation happens below them
- Lost probability mass is carried as trace_deficit, never renormalized away
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np
from scipy.linalg import expm

from ..exceptions import AmplitudeTooLargeError, DegenerateStateError, DomainError

logger = logging.getLogger(__name__)

# Levels at the top of the truncation reserved as support margin
SUPPORT_MARGIN = 15

HERMITICITY_TOL = 1e-10
POSITIVITY_TOL = 1e-8
TRACE_TOL = 1e-8


#########################
# OPERATORS
#########################

@dataclass(frozen=True)
class FockOperator:
    """Dense operator on the truncated Fock space."""
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError(f"Fock operator must be square, got shape {m.shape}")
        if m.shape[0] < 2:
            raise DomainError(f"Fock dimension must be >= 2, got {m.shape[0]}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def support_defect(self, margin: int = SUPPORT_MARGIN) -> float:
        """Max deviation of U^dagger U from identity on levels below d - margin."""
        keep = max(self.dim - margin, 1)
        gram = self.matrix.conj().T @ self.matrix
        return float(np.max(np.abs(gram[:keep, :keep] - np.eye(keep))))


def _check_dim(d: int):
    if d < 2:
        raise DomainError(f"Fock dimension must be >= 2, got {d}")


def annihilation(d: int) -> np.ndarray:
    _check_dim(d)
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1).astype(complex)


def creation(d: int) -> np.ndarray:
    return annihilation(d).conj().T


def number(d: int) -> np.ndarray:
    _check_dim(d)
    return np.diag(np.arange(d, dtype=float)).astype(complex)


def x_quadrature(d: int) -> np.ndarray:
    b = annihilation(d)
    return (b + b.conj().T) / math.sqrt(2)


def y_quadrature(d: int) -> np.ndarray:
    b = annihilation(d)
    return 1j * (b.conj().T - b) / math.sqrt(2)


def rotation(t: float, d: int) -> np.ndarray:
    """Free evolution exp(-i b^dagger b t)."""
    _check_dim(d)
    return np.diag(np.exp(-1j * t * np.arange(d)))


def required_dim(alpha: complex) -> int:
    """Smallest truncation passing the displacement support guard |alpha|^2 <= d/4."""
    return max(2, math.ceil(4 * abs(alpha) ** 2))


def displacement_matrix(alpha: complex, d: int) -> FockOperator:
    """
    Displacement D[alpha] = exp(alpha b^dagger - alpha* b) in the truncated basis.

    Args:
        alpha: Complex displacement amplitude
        d: Fock truncation

    Returns:
        FockOperator holding the exact exponential of the truncated generator

    Raises:
        AmplitudeTooLargeError: If |alpha|^2 > d/4
    """
    _check_dim(d)
    if abs(alpha) ** 2 > d / 4:
        raise AmplitudeTooLargeError(alpha, d, required_dim(alpha))
    if alpha == 0:
        return FockOperator(np.eye(d, dtype=complex))
    b = annihilation(d)
    generator = alpha * b.conj().T - np.conj(alpha) * b
    return FockOperator(expm(generator))


def recommended_fock_dim(nbar: float, alpha_max: float = 1.5, tail: float = 1e-6) -> int:
    """
    Truncation large enough for a thermal state of occupancy nbar displaced by up to alpha_max.

    Takes the larger of the thermal-tail bound (nbar/(nbar+1))^d < tail and the
    displaced-support bound r + 10 sqrt(r) + 10 with r = (sqrt(nbar) + alpha_max)^2.
    """
    if nbar < 0:
        raise DomainError(f"Thermal occupancy must be >= 0, got {nbar}")
    tail_dim = 2
    if nbar > 0:
        tail_dim = math.floor(math.log(tail) / math.log(nbar / (nbar + 1))) + 1
    r = (math.sqrt(nbar) + abs(alpha_max)) ** 2
    support_dim = math.ceil(r + 10 * math.sqrt(r) + 10)
    return max(tail_dim, support_dim, required_dim(alpha_max))


#########################
# STATES
#########################

@dataclass(frozen=True)
class MechState:
    """
    Density matrix of the mechanical mode.

    trace(rho) + trace_deficit equals 1 at construction; the deficit is mass lost to the
    truncation. Construction validates Hermiticity and positivity and symmetrizes rho.
    """
    rho: np.ndarray
    trace_deficit: float = field(default=0.0)

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 2:
            raise DomainError(f"Mechanical state must be a square matrix with d >= 2, got {rho.shape}")
        skew = float(np.max(np.abs(rho - rho.conj().T)))
        if skew > HERMITICITY_TOL:
            raise DomainError(f"Mechanical state is not Hermitian (deviation {skew:.2e})")
        rho = 0.5 * (rho + rho.conj().T)
        trace = float(np.trace(rho).real)
        if self.trace_deficit < -TRACE_TOL:
            raise DomainError(f"trace_deficit must be >= 0, got {self.trace_deficit}")
        if abs(trace + self.trace_deficit - 1.0) > TRACE_TOL:
            raise DomainError(
                f"trace {trace:.12g} + deficit {self.trace_deficit:.3g} does not sum to 1"
            )
        lowest = float(np.linalg.eigvalsh(rho)[0])
        if lowest < -POSITIVITY_TOL * max(trace, 1e-300):
            raise DomainError(f"Mechanical state is not positive (min eigenvalue {lowest:.2e})")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "trace_deficit", max(float(self.trace_deficit), 0.0))

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.rho).real)

    @classmethod
    def from_matrix(cls, rho: np.ndarray, total: float = 1.0) -> "MechState":
        """Rescale an unnormalized positive matrix to trace `total` and book the rest as deficit."""
        trace = float(np.trace(rho).real)
        if trace <= 0:
            raise DegenerateStateError("Cannot normalize a state with zero trace")
        return cls(np.asarray(rho) * (total / trace), trace_deficit=1.0 - total)


StateLike = Union[MechState, np.ndarray]


def _matrix(state) -> np.ndarray:
    return np.asarray(getattr(state, "rho", state))


def _trace(rho: np.ndarray) -> float:
    trace = float(np.trace(rho).real)
    if trace <= 0:
        raise DegenerateStateError("State has zero trace")
    return trace


def thermal_density(nbar: float, d: int) -> MechState:
    """Bose-Einstein state truncated to d levels: p_n = nbar^n / (nbar+1)^(n+1)."""
    _check_dim(d)
    if nbar < 0:
        raise DomainError(f"Thermal occupancy must be >= 0, got {nbar}")
    ratio = nbar / (nbar + 1.0)
    populations = (1.0 - ratio) * ratio ** np.arange(d)
    return MechState(np.diag(populations).astype(complex), trace_deficit=ratio ** d)


def coherent_vector(beta: complex, d: int) -> np.ndarray:
    """D[beta]|0> in the truncated basis."""
    return displacement_matrix(beta, d).matrix[:, 0].copy()


def coherent_density(beta: complex, d: int) -> MechState:
    psi = coherent_vector(beta, d)
    rho = np.outer(psi, psi.conj())
    return MechState(rho, trace_deficit=max(0.0, 1.0 - float(np.vdot(psi, psi).real)))


#########################
# OBSERVABLES
#########################

def mean_phonon(state: StateLike) -> float:
    """<b^dagger b> normalized by the current trace."""
    rho = _matrix(state)
    trace = _trace(rho)
    return float(np.dot(np.arange(rho.shape[0]), np.diagonal(rho).real)) / trace


def quadrature_variances(state: StateLike) -> Tuple[float, float]:
    """Standard deviations (dx, dy) of x = (b + b^dagger)/sqrt2 and y = i(b^dagger - b)/sqrt2."""
    rho = _matrix(state)
    trace = _trace(rho)
    d = rho.shape[0]
    spreads = []
    for op in (x_quadrature(d), y_quadrature(d)):
        first = np.trace(op @ rho).real / trace
        second = np.trace(op @ op @ rho).real / trace
        spreads.append(math.sqrt(max(second - first ** 2, 0.0)))
    return spreads[0], spreads[1]


def fock_distribution(state: StateLike) -> np.ndarray:
    """Diagonal Fock populations normalized by the current trace."""
    rho = _matrix(state)
    return np.diagonal(rho).real / _trace(rho)


def trace_distance(a, b) -> float:
    """Half the trace norm of a - b (both taken as given, no renormalization)."""
    diff = _matrix(a) - _matrix(b)
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def fidelity_with_pure(state: StateLike, psi: np.ndarray) -> float:
    rho = _matrix(state)
    psi = np.asarray(psi, dtype=complex)
    overlap = np.vdot(psi, rho @ psi).real
    return float(overlap / (_trace(rho) * np.vdot(psi, psi).real))
