"""
Closed-system evolution of N spins coupled to one mechanical mode.

H = b^dagger b - coupling * Sz (b + b^dagger), with Sz diagonal in the spin basis. Each spin
sector evolves as

    U_s = exp(i coupling^2 s^2 (t - sin t)) D[coupling * s * eta] exp(-i b^dagger b t)

where eta = 1 - exp(-i t) and s is the sector label:
- product basis: s = 2n - N for a configuration with n up-spins
- collective basis: s = m = N/2 - j for Dicke index j

The product and collective engines agree when coupling_collective = 2 * coupling_product.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import comb

from ..exceptions import (
    ConvergenceError,
    DimensionMismatchError,
    DomainError,
    UnsupportedCouplingError,
)
from ..schema.params import ModelParams
from .fockspace import MechState, displacement_matrix, number, rotation, trace_distance, x_quadrature

logger = logging.getLogger(__name__)

# Brute-force oracle limits
BRUTE_FORCE_MAX_SPINS = 2
BRUTE_FORCE_MAX_DIM = 60
BRUTE_FORCE_STEPS_PER_UNIT_TIME = 2000


#########################
# SPIN BASIS HELPERS
#########################

def spin_dim(n_spins: int, basis: str) -> int:
    return n_spins + 1 if basis == "collective" else 2 ** n_spins


def up_counts(n_spins: int, basis: str) -> np.ndarray:
    """Number of up-spins carried by each spin basis index."""
    if basis == "collective":
        return n_spins - np.arange(n_spins + 1)
    popcount = np.array([bin(k).count("1") for k in range(2 ** n_spins)])
    return n_spins - popcount


def sector_labels(n_spins: int, basis: str) -> np.ndarray:
    """Sz label of each sector, indexed by up-count n = 0..N."""
    n = np.arange(n_spins + 1)
    if basis == "collective":
        return n - n_spins / 2
    return (2 * n - n_spins).astype(float)


def dicke_embedding(n_spins: int) -> np.ndarray:
    """
    Isometry from the symmetric s = N/2 sector into the product basis.

    Column j is the normalized equal superposition of all configurations with N - j up-spins.
    """
    ups = up_counts(n_spins, "product")
    embedding = np.zeros((2 ** n_spins, n_spins + 1), dtype=complex)
    for j in range(n_spins + 1):
        members = ups == n_spins - j
        embedding[members, j] = 1.0 / math.sqrt(members.sum())
    return embedding


def spin_permutation_matrix(n_spins: int, perm: Sequence[int]) -> np.ndarray:
    """
    Permutation of spin labels on the product basis.

    Spin i of the output carries spin perm[i] of the input (0-based, spin 0 most significant).
    """
    if sorted(perm) != list(range(n_spins)):
        raise DomainError(f"{list(perm)} is not a permutation of {n_spins} spins")
    dim = 2 ** n_spins
    matrix = np.zeros((dim, dim))
    for k in range(dim):
        bits = [(k >> (n_spins - 1 - i)) & 1 for i in range(n_spins)]
        permuted = [bits[perm[i]] for i in range(n_spins)]
        target = int("".join(str(b) for b in permuted), 2)
        matrix[target, k] = 1.0
    return matrix


#########################
# JOINT STATE
#########################

@dataclass(frozen=True)
class QuantumState:
    """Joint spin-mechanics density matrix with the spin index as the slow index."""
    rho: np.ndarray
    n_spins: int
    fock_dim: int
    basis: str = "product"
    trace_deficit: float = 0.0

    def __post_init__(self):
        size = spin_dim(self.n_spins, self.basis) * self.fock_dim
        rho = np.asarray(self.rho, dtype=complex)
        if rho.shape != (size, size):
            raise DimensionMismatchError(
                f"Joint state has shape {rho.shape}, expected ({size}, {size}) for "
                f"N={self.n_spins} ({self.basis}) and d={self.fock_dim}"
            )
        object.__setattr__(self, "rho", rho)

    @property
    def spin_dim(self) -> int:
        return spin_dim(self.n_spins, self.basis)

    @property
    def trace(self) -> float:
        return float(np.trace(self.rho).real)

    @classmethod
    def from_product(cls, spin_vector: np.ndarray, mech: MechState, basis: str = "product") -> "QuantumState":
        spin_vector = np.asarray(spin_vector, dtype=complex)
        n_spins = spin_vector.size - 1 if basis == "collective" else int(round(math.log2(spin_vector.size)))
        spin = np.outer(spin_vector, spin_vector.conj())
        return cls(
            np.kron(spin, mech.rho),
            n_spins=n_spins,
            fock_dim=mech.dim,
            basis=basis,
            trace_deficit=mech.trace_deficit,
        )

    def blocks(self) -> np.ndarray:
        """View as (spin, fock, spin, fock)."""
        s, d = self.spin_dim, self.fock_dim
        return self.rho.reshape(s, d, s, d)

    def reduced_mechanics(self) -> MechState:
        return MechState(np.einsum("kakb->ab", self.blocks()), trace_deficit=self.trace_deficit)

    def reduced_spins(self) -> np.ndarray:
        return np.einsum("kala->kl", self.blocks())

    def with_rho(self, rho: np.ndarray) -> "QuantumState":
        return replace(self, rho=rho)


def collective_to_product(state: QuantumState) -> QuantumState:
    """Embed a collective-basis state into the product basis."""
    if state.basis != "collective":
        return state
    lift = np.kron(dicke_embedding(state.n_spins), np.eye(state.fock_dim))
    return QuantumState(
        lift @ state.rho @ lift.conj().T,
        n_spins=state.n_spins,
        fock_dim=state.fock_dim,
        basis="product",
        trace_deficit=state.trace_deficit,
    )


def _check_state(state: QuantumState, params: ModelParams):
    if (state.n_spins, state.fock_dim, state.basis) != (params.n_spins, params.fock_dim, params.basis):
        raise DimensionMismatchError(
            f"State (N={state.n_spins}, d={state.fock_dim}, {state.basis}) does not match "
            f"parameters (N={params.n_spins}, d={params.fock_dim}, {params.basis})"
        )


#########################
# EVOLUTION
#########################

@dataclass(frozen=True)
class SpinBlockUnitary:
    """
    Block-diagonal evolution operator.

    Sector n (up-count) carries phases[n] * factors[n]; sector_of maps each spin basis index
    to its sector.
    """
    labels: np.ndarray
    phases: np.ndarray
    factors: np.ndarray
    sector_of: np.ndarray
    amplitudes: np.ndarray

    @property
    def fock_dim(self) -> int:
        return self.factors.shape[-1]

    def sector_operator(self, n: int) -> np.ndarray:
        return self.phases[n] * self.factors[n]

    def block(self, k: int) -> np.ndarray:
        """Mechanical operator acting on spin basis index k."""
        return self.sector_operator(self.sector_of[k])

    def per_index(self) -> np.ndarray:
        """Stack of (spin_dim, d, d) block operators."""
        return self.phases[self.sector_of, None, None] * self.factors[self.sector_of]


def build_evolution(params: ModelParams, couplings: Optional[Sequence[float]] = None) -> SpinBlockUnitary:
    """
    Build the block-diagonal unitary for one evolution time.

    Args:
        params: Model parameters (coupling, time, N, d, basis)
        couplings: Optional per-spin couplings; only equal values are supported

    Returns:
        SpinBlockUnitary with one displacement-rotation factor per sector

    Raises:
        UnsupportedCouplingError: If per-spin couplings differ
        AmplitudeTooLargeError: If a sector displacement exceeds the truncation
    """
    coupling = params.coupling
    if couplings is not None:
        couplings = list(couplings)
        if len(couplings) != params.n_spins:
            raise DimensionMismatchError(
                f"Got {len(couplings)} couplings for {params.n_spins} spins"
            )
        if max(couplings) - min(couplings) > 0:
            raise UnsupportedCouplingError(
                f"Unequal spin couplings {couplings} are not supported; use one shared coupling"
            )
        coupling = couplings[0]

    t, d = params.time, params.fock_dim
    labels = sector_labels(params.n_spins, params.basis)
    amplitudes = coupling * labels * params.eta
    phases = np.exp(1j * coupling ** 2 * labels ** 2 * (t - math.sin(t)))
    free = rotation(t, d)
    factors = np.stack([displacement_matrix(a, d).matrix @ free for a in amplitudes])
    logger.debug(
        f"Built evolution N={params.n_spins} ({params.basis}), max |alpha|={np.abs(amplitudes).max():.4f}"
    )
    return SpinBlockUnitary(
        labels=labels,
        phases=phases,
        factors=factors,
        sector_of=up_counts(params.n_spins, params.basis),
        amplitudes=amplitudes,
    )


def evolve_closed(state: QuantumState, params: ModelParams, evolution: Optional[SpinBlockUnitary] = None) -> QuantumState:
    """Apply U rho U^dagger blockwise."""
    _check_state(state, params)
    if evolution is None:
        evolution = build_evolution(params)
    u = evolution.per_index()
    blocks = np.einsum("kab,kblc,ldc->kald", u, state.blocks(), u.conj(), optimize=True)
    size = state.spin_dim * state.fock_dim
    return state.with_rho(blocks.reshape(size, size))


def coherent_ratio_closed_form(coupling: float, beta: float) -> float:
    """Phonon ratio (1 - 2 coupling / beta)^2 after postselecting |up> at t = pi."""
    if beta <= 0:
        raise DomainError(f"Coherent amplitude must be positive, got {beta}")
    return (1.0 - 2.0 * coupling / beta) ** 2


def traced_mean_phonon(t: float, coupling: float, nbar: float) -> float:
    """Single-spin mean phonon number with the spin traced out."""
    return nbar + 2.0 * coupling ** 2 * (1.0 - math.cos(t))


def joint_hamiltonian(params: ModelParams) -> np.ndarray:
    """Dense H = I x b^dagger b - coupling * Sz x (b + b^dagger)."""
    d = params.fock_dim
    sz = sector_labels(params.n_spins, params.basis)[up_counts(params.n_spins, params.basis)]
    spin_identity = np.eye(sz.size)
    return np.kron(spin_identity, number(d)) - params.coupling * math.sqrt(2) * np.kron(
        np.diag(sz), x_quadrature(d)
    )


def _rk4_von_neumann(rho: np.ndarray, hamiltonian: np.ndarray, duration: float, steps: int) -> np.ndarray:
    dt = duration / steps

    def derivative(r):
        return -1j * (hamiltonian @ r - r @ hamiltonian)

    for _ in range(steps):
        k1 = derivative(rho)
        k2 = derivative(rho + 0.5 * dt * k1)
        k3 = derivative(rho + 0.5 * dt * k2)
        k4 = derivative(rho + dt * k3)
        rho = rho + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


def brute_force_residual(state: QuantumState, params: ModelParams, steps: int) -> float:
    """Trace distance between integrations with `steps` and `2 * steps` steps."""
    hamiltonian = joint_hamiltonian(params)
    coarse = _rk4_von_neumann(state.rho, hamiltonian, params.time, steps)
    fine = _rk4_von_neumann(state.rho, hamiltonian, params.time, 2 * steps)
    return trace_distance(coarse, fine)


def evolve_brute_force(state: QuantumState, params: ModelParams, steps: int) -> QuantumState:
    """
    Integrate the von Neumann equation with fixed-step RK4.

    Used as an oracle for the block construction; limited to N <= 2 and d <= 60.

    Raises:
        DomainError: If the joint space is too large for dense integration
        ConvergenceError: If steps < 2000 * t; carries the half-step residual
    """
    _check_state(state, params)
    if params.n_spins > BRUTE_FORCE_MAX_SPINS or params.fock_dim > BRUTE_FORCE_MAX_DIM:
        raise DomainError(
            f"Brute-force integration supports N <= {BRUTE_FORCE_MAX_SPINS} and "
            f"d <= {BRUTE_FORCE_MAX_DIM}, got N={params.n_spins}, d={params.fock_dim}"
        )
    minimum = math.ceil(BRUTE_FORCE_STEPS_PER_UNIT_TIME * params.time)
    if steps < minimum:
        residual = brute_force_residual(state, params, max(steps, 1))
        raise ConvergenceError(
            f"{steps} steps is below the {minimum} needed for t={params.time:.4g} "
            f"(half-step residual {residual:.2e})",
            residual=residual,
        )
    rho = _rk4_von_neumann(state.rho, joint_hamiltonian(params), params.time, steps)
    return state.with_rho(0.5 * (rho + rho.conj().T))


#########################
# COHERENT BRANCHES
#########################

@dataclass(frozen=True)
class CoherentBranch:
    """
    Coherent component of a sector with n up-spins evolved from |beta>.

    D[coupling * s * eta] R(t) |beta> = exp(i phase) |amplitude>.
    """
    n: int
    amplitude: complex
    phase: float


def coherent_branch(n: int, beta: complex, params: ModelParams) -> CoherentBranch:
    if not 0 <= n <= params.n_spins:
        raise DomainError(f"Up-count {n} outside 0..{params.n_spins}")
    label = sector_labels(params.n_spins, params.basis)[n]
    t = params.time
    r, angle = abs(beta), np.angle(beta)
    amplitude = beta * np.exp(-1j * t) + params.coupling * label * params.eta
    phase = 2 * params.coupling * label * r * math.cos(angle - t / 2) * math.sin(t / 2)
    return CoherentBranch(n=n, amplitude=complex(amplitude), phase=float(phase))


def branch_pair_weight(n: int, m: int, params: ModelParams) -> complex:
    """
    Weight of the (n, m) sector pair for equiprobable preparation and postselection.

    Binomial multiplicities times the entangling phase difference; real for n == m.
    """
    big_n = params.n_spins
    labels = sector_labels(big_n, params.basis)
    t = params.time
    if params.basis == "collective":
        magnitude = 1.0 / (big_n + 1) ** 2
    else:
        magnitude = comb(big_n, n, exact=True) * comb(big_n, m, exact=True) / 4.0 ** big_n
    phase = params.coupling ** 2 * (labels[n] ** 2 - labels[m] ** 2) * (t - math.sin(t))
    return complex(magnitude * np.exp(1j * phase))
