"""
Spin target states and conditional collapse of the joint state.

Product-basis coefficient order for two spins is (up-up, up-down, down-up, down-down), spin 1
most significant. Bell coefficients are ordered (Phi-, Phi+, Psi+, Psi-) with

    Phi+- = (|dd> +- |uu>)/sqrt2,  Psi+- = (|du> +- |ud>)/sqrt2
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np

from ..exceptions import (
    DegenerateStateError,
    DimensionMismatchError,
    DomainError,
    UnsupportedBasisError,
    VanishingBranchError,
)
from .dynamics import QuantumState, dicke_embedding
from .fockspace import MechState

logger = logging.getLogger(__name__)

# Branches below this probability are numerically meaningless
PROBABILITY_FLOOR = 1e-12

NORM_TOL = 1e-10
GAUGE_CUTOFF = 1e-10

# Shared coefficient of the six configurations outside {|duu>, |dud>} in the 3-spin target
_CORR3_WEIGHT = -math.sqrt((1 - 2 / 25) / 6)


class TargetBasis(str, Enum):
    PRODUCT = "product"
    COLLECTIVE = "collective"
    BELL = "bell"


def gauge_fix(coefficients: np.ndarray) -> np.ndarray:
    """Rotate the global phase so the first non-negligible coefficient is real positive."""
    c = np.asarray(coefficients, dtype=complex)
    nonzero = np.flatnonzero(np.abs(c) > GAUGE_CUTOFF)
    if nonzero.size == 0:
        return c
    lead = c[nonzero[0]]
    return c * (abs(lead) / lead)


@dataclass(frozen=True)
class TargetState:
    """Unit-norm, gauge-fixed spin state used for preparation or postselection."""
    basis: TargetBasis
    coefficients: np.ndarray

    def __post_init__(self):
        basis = TargetBasis(self.basis)
        c = np.asarray(self.coefficients, dtype=complex).ravel()
        size = c.size
        if basis == TargetBasis.PRODUCT and (size < 2 or size & (size - 1)):
            raise DimensionMismatchError(f"Product target needs 2^N coefficients, got {size}")
        if basis == TargetBasis.BELL and size != 4:
            raise DimensionMismatchError(f"Bell target needs 4 coefficients, got {size}")
        if basis == TargetBasis.COLLECTIVE and size < 2:
            raise DimensionMismatchError(f"Collective target needs N+1 >= 2 coefficients, got {size}")
        norm = float(np.linalg.norm(c))
        if abs(norm - 1.0) > NORM_TOL:
            raise DomainError(f"Target coefficients must have unit norm, got {norm:.12g}")
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "coefficients", gauge_fix(c))

    @classmethod
    def normalized(cls, basis: TargetBasis, coefficients) -> "TargetState":
        c = np.asarray(coefficients, dtype=complex)
        norm = np.linalg.norm(c)
        if norm == 0:
            raise DomainError("Target coefficients are all zero")
        return cls(basis, c / norm)

    @property
    def n_spins(self) -> int:
        if self.basis == TargetBasis.COLLECTIVE:
            return self.coefficients.size - 1
        if self.basis == TargetBasis.BELL:
            return 2
        return self.coefficients.size.bit_length() - 1

    def in_product_basis(self) -> np.ndarray:
        if self.basis == TargetBasis.BELL:
            return from_bell_coefficients(self.coefficients)
        if self.basis == TargetBasis.COLLECTIVE:
            return dicke_embedding(self.n_spins) @ self.coefficients
        return self.coefficients

    def vector_in(self, basis: str) -> np.ndarray:
        """Coefficients in the basis of an evolution engine ('product' or 'collective')."""
        if basis == "product":
            return self.in_product_basis()
        if self.basis != TargetBasis.COLLECTIVE:
            raise UnsupportedBasisError(
                f"A {self.basis.value} target cannot act on collective-basis states"
            )
        return self.coefficients


#########################
# TARGETS
#########################

def target_independent(n_spins: int) -> TargetState:
    """|+> on every spin."""
    if n_spins < 1:
        raise DomainError(f"n_spins must be >= 1, got {n_spins}")
    dim = 2 ** n_spins
    return TargetState(TargetBasis.PRODUCT, np.full(dim, 2.0 ** (-n_spins / 2)))


def target_bloch(theta: float, delta: float) -> TargetState:
    """cos(theta/2)|up> + sin(theta/2) e^{i delta}|down>."""
    return TargetState(
        TargetBasis.PRODUCT,
        [math.cos(theta / 2), math.sin(theta / 2) * np.exp(1j * delta)],
    )


def target_corr2() -> TargetState:
    return TargetState(TargetBasis.PRODUCT, [0.5, 0.0, 1 / math.sqrt(2), 0.5])


def target_corr3() -> TargetState:
    a = _CORR3_WEIGHT
    return TargetState(TargetBasis.PRODUCT, [a, a, a, a, 0.2, 0.2, a, a])


def target_collective_flat(n_spins: int) -> TargetState:
    if n_spins < 1:
        raise DomainError(f"n_spins must be >= 1, got {n_spins}")
    return TargetState(TargetBasis.COLLECTIVE, np.full(n_spins + 1, 1 / math.sqrt(n_spins + 1)))


def target_bell(coefficients) -> TargetState:
    """Two-spin target from (Phi-, Phi+, Psi+, Psi-) coefficients."""
    return TargetState(TargetBasis.BELL, coefficients)


def to_bell_coefficients(product: np.ndarray) -> np.ndarray:
    c1, c2, c3, c4 = np.asarray(product, dtype=complex)
    return np.array([c4 - c1, c4 + c1, c3 + c2, c3 - c2]) / math.sqrt(2)


def from_bell_coefficients(bell: np.ndarray) -> np.ndarray:
    phi_minus, phi_plus, psi_plus, psi_minus = np.asarray(bell, dtype=complex)
    return np.array(
        [phi_plus - phi_minus, psi_plus - psi_minus, psi_plus + psi_minus, phi_plus + phi_minus]
    ) / math.sqrt(2)


#########################
# COLLAPSE
#########################

@dataclass(frozen=True)
class PostselectionOutcome:
    state: MechState
    probability: float


def _target_vector(state: QuantumState, target: TargetState) -> np.ndarray:
    if target.n_spins != state.n_spins:
        raise DimensionMismatchError(
            f"Target acts on {target.n_spins} spins, state has {state.n_spins}"
        )
    return target.vector_in(state.basis)


def collapse(state: QuantumState, target: TargetState) -> np.ndarray:
    """Unnormalized mechanical matrix <target| rho |target>."""
    c = _target_vector(state, target)
    return np.einsum("k,kalb,l->ab", c.conj(), state.blocks(), c, optimize=True)


def _outcome(state: QuantumState, mech: np.ndarray, floor: float) -> PostselectionOutcome:
    total = state.trace
    if total <= 0:
        raise DegenerateStateError("Cannot postselect a state with zero trace")
    probability = float(np.trace(mech).real) / total
    if probability < floor:
        raise VanishingBranchError(probability)
    probability = min(probability, 1.0)
    return PostselectionOutcome(MechState.from_matrix(mech, total=total), probability)


def postselect(state: QuantumState, target: TargetState, floor: float = PROBABILITY_FLOOR) -> PostselectionOutcome:
    """
    Condition the mechanics on finding the spins in `target`.

    The collapsed state is rescaled to the input's trace so truncation loss keeps being
    carried; probability is the collapsed trace relative to the input trace.

    Raises:
        VanishingBranchError: If the success probability is below `floor`
        UnsupportedBasisError: If the target cannot be expressed in the state's basis
    """
    return _outcome(state, collapse(state, target), floor)


def failed_branch(state: QuantumState, target: TargetState, floor: float = PROBABILITY_FLOOR) -> PostselectionOutcome:
    """Mechanics conditioned on the complement (I - |target><target|) of the target."""
    traced = np.einsum("kakb->ab", state.blocks())
    return _outcome(state, traced - collapse(state, target), floor)


def branch_probabilities(state: QuantumState, target: TargetState) -> Tuple[float, float]:
    """(success, failure) probabilities without the vanishing-branch check."""
    total = state.trace
    if total <= 0:
        raise DegenerateStateError("State has zero trace")
    success = float(np.trace(collapse(state, target)).real) / total
    return success, 1.0 - success


def postselect_via_projector(state: QuantumState, target: TargetState, floor: float = PROBABILITY_FLOOR) -> PostselectionOutcome:
    """Projector-then-partial-trace collapse; a cross-check for up to two spins."""
    if state.n_spins > 2:
        raise DomainError("Projector postselection is limited to N <= 2")
    c = _target_vector(state, target)
    projector = np.kron(np.outer(c, c.conj()), np.eye(state.fock_dim))
    projected = projector @ state.rho @ projector
    size = state.spin_dim
    mech = np.einsum("kakb->ab", projected.reshape(size, state.fock_dim, size, state.fock_dim))
    return _outcome(state, mech, floor)
