"""
Open-system evolution of the spin-mechanics state and the noisy cooling protocol.

    d rho/dt = -i[H, rho] + gamma (1 + nbar) D[b] + gamma nbar D[b^dagger]
               + sum_i { Gamma (1 + nbar) D[s-_i] + Gamma nbar D[s+_i] + (gamma_phi / 2) D[sz_i] }

with D[O] rho = O rho O^dagger - (O^dagger O rho + rho O^dagger O) / 2 and nbar the bath
occupancy. Jump operators break the spin-sector structure, so the full joint density matrix
is integrated (product basis only).
"""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from scipy import sparse

from ..exceptions import DomainError, StepSizeError, UnsupportedBasisError, VanishingBranchError
from ..schema.params import LindbladRates, ModelParams
from .dynamics import QuantumState, sector_labels, up_counts
from .fockspace import MechState, annihilation, thermal_density
from .postselect import postselect
from .protocol import IterationRecord, Strategy, baseline_occupancy, make_record

logger = logging.getLogger(__name__)

DEFAULT_DT = 2 * math.pi * 1e-3
MAX_JOINT_DIM = 512
MAX_OPEN_SPINS = 4
POSITIVITY_TOL = 1e-6

# (up, down) ordering
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)


def _single_spin(op: np.ndarray, index: int, n_spins: int) -> sparse.csr_matrix:
    left = sparse.identity(2 ** index, format="csr")
    right = sparse.identity(2 ** (n_spins - index - 1), format="csr")
    return sparse.kron(sparse.kron(left, sparse.csr_matrix(op)), right, format="csr")


class LindbladGenerator:
    """Sparse Hamiltonian and weighted jump operators on the joint product space."""

    def __init__(self, params: ModelParams, rates: LindbladRates):
        if params.basis != "product":
            raise UnsupportedBasisError("Open-system evolution needs per-spin operators (product basis)")
        spins, d = 2 ** params.n_spins, params.fock_dim
        if spins * d > MAX_JOINT_DIM:
            raise DomainError(
                f"Joint dimension {spins * d} exceeds {MAX_JOINT_DIM}; reduce N or the Fock truncation"
            )
        self.dim = spins * d
        spin_id = sparse.identity(spins, format="csr")
        fock_id = sparse.identity(d, format="csr")
        b = sparse.csr_matrix(annihilation(d))
        n = b.conj().T @ b
        sz_total = sparse.diags(sector_labels(params.n_spins, "product")[up_counts(params.n_spins, "product")])
        self.hamiltonian = (
            sparse.kron(spin_id, n) - params.coupling * sparse.kron(sz_total, b + b.conj().T)
        ).tocsr()

        nbar = rates.bath_occupancy(params)
        candidates = [
            (rates.gamma * (1 + nbar), sparse.kron(spin_id, b, format="csr")),
            (rates.gamma * nbar, sparse.kron(spin_id, b.conj().T, format="csr")),
        ]
        for i in range(params.n_spins):
            lower = _single_spin(SIGMA_MINUS, i, params.n_spins)
            candidates.append((rates.spin_relaxation * (1 + nbar), sparse.kron(lower, fock_id, format="csr")))
            candidates.append((rates.spin_relaxation * nbar, sparse.kron(lower.conj().T, fock_id, format="csr")))
            candidates.append(
                (rates.dephasing / 2, sparse.kron(_single_spin(SIGMA_Z, i, params.n_spins), fock_id, format="csr"))
            )
        self.jumps: List[Tuple[float, sparse.csr_matrix, sparse.csr_matrix]] = [
            (rate, op, (op.conj().T @ op).tocsr()) for rate, op in candidates if rate > 0
        ]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        h = self.hamiltonian
        drho = -1j * (h @ rho - (h.T @ rho.T).T)
        for rate, op, op_dag_op in self.jumps:
            sandwich = (op.conj() @ (op @ rho).T).T
            anticommutator = op_dag_op @ rho + (op_dag_op.T @ rho.T).T
            drho = drho + rate * (sandwich - 0.5 * anticommutator)
        return drho


def liouvillian_apply(state: QuantumState, params: ModelParams, rates: LindbladRates) -> np.ndarray:
    """Time derivative of the joint density matrix."""
    if state.basis != "product":
        raise UnsupportedBasisError("Open-system evolution needs per-spin operators (product basis)")
    return LindbladGenerator(params, rates).apply(state.rho)


def evolve_open(
    state: QuantumState,
    params: ModelParams,
    rates: LindbladRates,
    duration: Optional[float] = None,
    dt: float = DEFAULT_DT,
    generator: Optional[LindbladGenerator] = None,
) -> QuantumState:
    """
    Fixed-step RK4 integration of the master equation.

    Args:
        state: Joint product-basis state
        params: Model parameters; params.time is the default duration
        rates: Noise rates
        duration: Evolution time, defaults to params.time
        dt: Maximum step; the actual step divides duration evenly
        generator: Prebuilt generator to reuse across calls

    Raises:
        StepSizeError: If the final state has an eigenvalue below -1e-6 * trace
    """
    if state.basis != "product":
        raise UnsupportedBasisError("Open-system evolution needs per-spin operators (product basis)")
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if generator is None:
        generator = LindbladGenerator(params, rates)
    duration = params.time if duration is None else duration
    steps = max(1, math.ceil(duration / dt - 1e-9))
    h = duration / steps
    rho = state.rho.copy()
    worst = 0.0
    for _ in range(steps):
        k1 = generator.apply(rho)
        k2 = generator.apply(rho + 0.5 * h * k1)
        k3 = generator.apply(rho + 0.5 * h * k2)
        k4 = generator.apply(rho + h * k3)
        rho = rho + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        worst = max(worst, float(np.max(np.abs(rho - rho.conj().T))))
        rho = 0.5 * (rho + rho.conj().T)
    logger.debug(f"Open evolution: {steps} steps of {h:.3g}, max Hermiticity deviation {worst:.2e}")

    trace = float(np.trace(rho).real)
    lowest = float(np.linalg.eigvalsh(rho)[0])
    if lowest < -POSITIVITY_TOL * trace:
        raise StepSizeError(
            f"Positivity lost (min eigenvalue {lowest:.2e}); retry with dt smaller than {h:.3g}"
        )
    return state.with_rho(rho)


def run_protocol_open(
    params: ModelParams,
    strategy: Strategy,
    rates: LindbladRates,
    iterations: int,
    dt: float = DEFAULT_DT,
    initial: Optional[MechState] = None,
) -> List[IterationRecord]:
    """
    Cooling loop with master-equation evolution inside each step.

    The mechanical state is carried between iterations without re-thermalization; spins
    follow strategy.reinitialize_spins.

    Raises:
        VanishingBranchError: With the failing iteration and the records produced so far
    """
    if iterations < 1:
        raise DomainError(f"iterations must be >= 1, got {iterations}")
    if strategy.basis != "product" or params.basis != "product":
        raise UnsupportedBasisError("Open-system protocol runs need the product basis")
    if params.n_spins > MAX_OPEN_SPINS or strategy.n_spins != params.n_spins:
        raise DomainError(
            f"Open-system protocol supports 1..{MAX_OPEN_SPINS} spins matching the strategy, "
            f"got N={params.n_spins} with a {strategy.n_spins}-spin strategy"
        )
    for warning in rates.feasibility_warnings():
        logger.warning(f"Outside feasibility envelope: {warning}")

    generator = LindbladGenerator(params, rates)
    mech = initial if initial is not None else thermal_density(params.nbar, params.fock_dim)
    baseline = baseline_occupancy(mech)
    preparation = strategy.preparation
    cumulative = 1.0
    records: List[IterationRecord] = []
    logger.info(
        f"Open protocol start: N={params.n_spins} gamma={rates.gamma:g} "
        f"Gamma={rates.spin_relaxation:g} gamma_phi={rates.dephasing:g} K={iterations}"
    )
    for index in range(1, iterations + 1):
        joint = QuantumState.from_product(preparation.vector_in("product"), mech)
        evolved = evolve_open(joint, params, rates, dt=dt, generator=generator)
        try:
            outcome = postselect(evolved, strategy.target)
        except VanishingBranchError as e:
            raise VanishingBranchError(e.probability, iteration=index, records=records) from e
        mech = outcome.state
        cumulative *= outcome.probability
        record = make_record(index, mech, baseline, outcome.probability, cumulative)
        records.append(record)
        logger.debug(f"open iter {index}: ratio={record.ratio:.6g} p_step={record.step_probability:.4g}")
        preparation = strategy.next_preparation()
    logger.info(f"Open protocol end: ratio={records[-1].ratio:.6g}")
    return records
