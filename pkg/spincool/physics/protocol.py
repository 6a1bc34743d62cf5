"""
Iterative cooling protocol: prepare spins, evolve, postselect, repeat.

Between iterations the joint state is separable (a successful postselection leaves the spins
in the target, and re-preparation resets them), so only the d x d mechanical matrix is
carried. One step is then the single-Kraus map

    rho -> K rho K^dagger,   K = sum_n w_n U_n,   w_n = sum_{k in sector n} conj(target_k) prep_k

which expands to the sum over sector pairs w_n w_m* U_n rho U_m^dagger.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from multiprocessing import Pool
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import DimensionMismatchError, DomainError, VanishingBranchError
from ..schema.params import ModelParams
from .dynamics import QuantumState, SpinBlockUnitary, build_evolution, evolve_closed
from .fockspace import MechState, mean_phonon, quadrature_variances, thermal_density
from .postselect import (
    PROBABILITY_FLOOR,
    TargetState,
    postselect,
    target_collective_flat,
    target_independent,
)

logger = logging.getLogger(__name__)


class StrategyKind(str, Enum):
    INDEPENDENT = "independent"
    CORRELATED = "correlated"
    COLLECTIVE = "collective"


@dataclass(frozen=True)
class Strategy:
    """
    How spins are prepared and postselected each iteration.

    With reinitialize_spins the spins are reset to `preparation` before every step;
    otherwise the next step starts from the postselected target.
    """
    kind: StrategyKind
    preparation: TargetState
    target: TargetState
    reinitialize_spins: bool

    def __post_init__(self):
        if self.preparation.n_spins != self.target.n_spins:
            raise DimensionMismatchError(
                f"Preparation acts on {self.preparation.n_spins} spins, "
                f"target on {self.target.n_spins}"
            )

    @classmethod
    def independent(cls, n_spins: int) -> "Strategy":
        plus = target_independent(n_spins)
        return cls(StrategyKind.INDEPENDENT, plus, plus, reinitialize_spins=False)

    @classmethod
    def correlated(cls, target: TargetState) -> "Strategy":
        return cls(
            StrategyKind.CORRELATED,
            target_independent(target.n_spins),
            target,
            reinitialize_spins=True,
        )

    @classmethod
    def collective(cls, n_spins: int) -> "Strategy":
        flat = target_collective_flat(n_spins)
        return cls(StrategyKind.COLLECTIVE, flat, flat, reinitialize_spins=True)

    @property
    def n_spins(self) -> int:
        return self.target.n_spins

    @property
    def basis(self) -> str:
        return "collective" if self.kind == StrategyKind.COLLECTIVE else "product"

    def with_reinitialize(self, flag: bool) -> "Strategy":
        return Strategy(self.kind, self.preparation, self.target, flag)

    def next_preparation(self) -> TargetState:
        return self.preparation if self.reinitialize_spins else self.target


@dataclass(frozen=True)
class IterationRecord:
    index: int
    mean_phonon: float
    ratio: float
    dx: float
    dy: float
    step_probability: float
    cumulative_probability: float

    def to_row(self) -> Dict[str, float]:
        return {
            "iter": self.index,
            "mean_phonon": self.mean_phonon,
            "ratio": self.ratio,
            "dx": self.dx,
            "dy": self.dy,
            "p_step": self.step_probability,
            "p_cum": self.cumulative_probability,
        }


def expected_restarts(records: Sequence[IterationRecord]) -> float:
    """Mean number of full protocol attempts until every postselection succeeds."""
    if not records:
        return 1.0
    return 1.0 / records[-1].cumulative_probability


#########################
# STEP MAP
#########################

@dataclass(frozen=True)
class StepMap:
    """Completely positive, trace-nonincreasing map of one protocol step."""
    kraus: np.ndarray
    sector_weights: np.ndarray

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return self.kraus @ rho @ self.kraus.conj().T

    def probability(self, rho: np.ndarray) -> float:
        return float(np.trace(self.apply(rho)).real / np.trace(rho).real)


def _check_strategy(params: ModelParams, strategy: Strategy):
    if strategy.n_spins != params.n_spins:
        raise DimensionMismatchError(
            f"Strategy acts on {strategy.n_spins} spins, parameters have {params.n_spins}"
        )
    if strategy.basis != params.basis:
        raise DimensionMismatchError(
            f"Strategy needs the {strategy.basis} basis, parameters use {params.basis}"
        )


def build_step_superoperator(
    params: ModelParams,
    strategy: Strategy,
    preparation: Optional[TargetState] = None,
    evolution: Optional[SpinBlockUnitary] = None,
) -> StepMap:
    """
    Mechanical-only map of one evolve-and-postselect step.

    Args:
        params: Model parameters
        strategy: Postselection strategy supplying the target
        preparation: Spin state at the start of the step (defaults to strategy.preparation)
        evolution: Prebuilt evolution blocks to reuse across steps

    Returns:
        StepMap whose trace after application is the step probability
    """
    _check_strategy(params, strategy)
    if preparation is None:
        preparation = strategy.preparation
    if evolution is None:
        evolution = build_evolution(params)
    prep = preparation.vector_in(params.basis)
    target = strategy.target.vector_in(params.basis)
    weights = np.zeros(params.n_spins + 1, dtype=complex)
    np.add.at(weights, evolution.sector_of, target.conj() * prep)
    kraus = np.einsum("n,n,nab->ab", weights, evolution.phases, evolution.factors)
    return StepMap(kraus=kraus, sector_weights=weights)


#########################
# PROTOCOL
#########################

def baseline_occupancy(mech: MechState) -> float:
    """Mean phonon number of the initial state; ratios are undefined for the vacuum."""
    baseline = mean_phonon(mech)
    if baseline <= 0:
        raise DomainError("Initial state has zero mean phonon number; cooling ratios are undefined")
    return baseline


def make_record(index: int, mech: MechState, baseline: float, p_step: float, p_cum: float) -> IterationRecord:
    mean = mean_phonon(mech)
    dx, dy = quadrature_variances(mech)
    return IterationRecord(
        index=index,
        mean_phonon=mean,
        ratio=mean / baseline,
        dx=dx,
        dy=dy,
        step_probability=p_step,
        cumulative_probability=p_cum,
    )


def iterate_protocol(
    params: ModelParams,
    strategy: Strategy,
    iterations: int,
    initial: Optional[MechState] = None,
    engine: str = "kraus",
) -> Iterator[Tuple[IterationRecord, MechState]]:
    """
    Yield (record, mechanical state) after each successful iteration.

    engine "kraus" uses the mechanical-only step map; "joint" threads the full
    spin-mechanics state through evolve_closed and postselect.

    Raises:
        VanishingBranchError: With the failing iteration and the records produced so far
        DomainError: If the initial state has zero mean phonon number
    """
    if iterations < 1:
        raise DomainError(f"iterations must be >= 1, got {iterations}")
    if engine not in ("kraus", "joint"):
        raise DomainError(f"Unknown protocol engine '{engine}'")
    _check_strategy(params, strategy)

    mech = initial if initial is not None else thermal_density(params.nbar, params.fock_dim)
    if mech.dim != params.fock_dim:
        raise DimensionMismatchError(f"Initial state has d={mech.dim}, parameters d={params.fock_dim}")
    baseline = baseline_occupancy(mech)
    evolution = build_evolution(params)
    step_maps: Dict[bool, StepMap] = {}
    preparation = strategy.preparation
    cumulative = 1.0
    records: List[IterationRecord] = []

    for index in range(1, iterations + 1):
        total = mech.trace
        if engine == "kraus":
            reset = preparation is strategy.preparation
            if reset not in step_maps:
                step_maps[reset] = build_step_superoperator(params, strategy, preparation, evolution)
            collapsed = step_maps[reset].apply(mech.rho)
            p_step = float(np.trace(collapsed).real) / total
            if p_step < PROBABILITY_FLOOR:
                raise VanishingBranchError(p_step, iteration=index, records=records)
            mech = MechState.from_matrix(collapsed, total=total)
        else:
            joint = QuantumState.from_product(preparation.vector_in(params.basis), mech, params.basis)
            try:
                outcome = postselect(evolve_closed(joint, params, evolution), strategy.target)
            except VanishingBranchError as e:
                raise VanishingBranchError(e.probability, iteration=index, records=records) from e
            p_step, mech = outcome.probability, outcome.state

        cumulative *= p_step
        record = make_record(index, mech, baseline, p_step, cumulative)
        records.append(record)
        logger.debug(
            f"iter {index}: <n>={record.mean_phonon:.6g} ratio={record.ratio:.6g} "
            f"p_step={p_step:.4g} p_cum={cumulative:.4g}"
        )
        yield record, mech
        preparation = strategy.next_preparation()


def run_protocol(
    params: ModelParams,
    strategy: Strategy,
    iterations: int,
    initial: Optional[MechState] = None,
    engine: str = "kraus",
) -> List[IterationRecord]:
    """
    Run the cooling loop for a fixed number of successful iterations.

    Examples:
        >>> records = run_protocol(ModelParams(coupling=0.12), Strategy.independent(1), 8)
        >>> records[-1].ratio < records[0].ratio
        True
    """
    if params.coupling > 0 and not params.in_operating_range:
        logger.warning(f"Coupling {params.coupling:g} is outside the operating range 1e-4..1e-1")
    logger.info(
        f"Protocol start: {strategy.kind.value} N={params.n_spins} coupling={params.coupling:g} "
        f"t={params.time:.4g} K={iterations} engine={engine}"
    )
    records = [record for record, _ in iterate_protocol(params, strategy, iterations, initial, engine)]
    logger.info(
        f"Protocol end: ratio={records[-1].ratio:.6g} p_cum={records[-1].cumulative_probability:.4g}"
    )
    return records


@dataclass(frozen=True)
class CoolingMatch:
    """
    Records of a run stopped at the first iteration reaching a target occupancy.

    When `reached` is False the run hit its iteration cap first and the records end there.
    """
    target_mean_phonon: float
    reached: bool
    records: List[IterationRecord]

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def cumulative_probability(self) -> float:
        return self.records[-1].cumulative_probability


def run_until_cooled(
    params: ModelParams,
    strategy: Strategy,
    target_mean_phonon: float,
    max_iterations: int,
    initial: Optional[MechState] = None,
) -> CoolingMatch:
    """
    Iterate until the mean phonon number drops to target_mean_phonon or max_iterations pass.

    Used to compare strategies at matched cooling rather than at a matched iteration count.
    """
    records: List[IterationRecord] = []
    for record, _ in iterate_protocol(params, strategy, max_iterations, initial):
        records.append(record)
        if record.mean_phonon <= target_mean_phonon:
            logger.info(f"Reached <n>={record.mean_phonon:.4g} after {record.index} iterations")
            return CoolingMatch(target_mean_phonon, True, records)
    logger.info(
        f"<n>={records[-1].mean_phonon:.4g} still above {target_mean_phonon:.4g} "
        f"after {max_iterations} iterations"
    )
    return CoolingMatch(target_mean_phonon, False, records)


def single_step(params: ModelParams, strategy: Strategy, initial: Optional[MechState] = None) -> IterationRecord:
    record, _ = next(iterate_protocol(params, strategy, 1, initial))
    return record


#########################
# SWEEPS
#########################

@dataclass(frozen=True)
class SweepPoint:
    time: float
    coupling: float
    ratio: float
    var_ratio: float
    probability: float


def _sweep_point(job) -> SweepPoint:
    """Top-level worker so grid points can be fanned out to a process pool."""
    params, strategy, initial = job
    try:
        record = single_step(params, strategy, initial)
    except VanishingBranchError as e:
        return SweepPoint(params.time, params.coupling, float("nan"), float("nan"), e.probability)
    return SweepPoint(
        time=params.time,
        coupling=params.coupling,
        ratio=record.ratio,
        var_ratio=record.dx / record.dy,
        probability=record.step_probability,
    )


def sweep_ratio(
    params: ModelParams,
    strategy: Strategy,
    couplings: Sequence[float],
    times: Sequence[float],
    jobs: int = 1,
) -> List[SweepPoint]:
    """
    Single-step ratio, variance ratio and probability over a (time, coupling) grid.

    Points are ordered time-major. Vanishing branches are reported as NaN ratios.
    """
    if len(couplings) == 0 or len(times) == 0:
        raise DomainError("Sweep grids must be nonempty")
    initial = thermal_density(params.nbar, params.fock_dim)
    grid = [
        (params.updated(time=float(t), coupling=float(c)), strategy, initial)
        for t in times
        for c in couplings
    ]
    logger.info(f"Sweeping {len(grid)} points (N={params.n_spins}, jobs={jobs})")
    if jobs > 1:
        with Pool(jobs) as pool:
            return pool.map(_sweep_point, grid)
    return [_sweep_point(job) for job in grid]


def enhancement_ratio(n_high: int, params: ModelParams) -> float:
    """
    Single-step ratio with n_high independent spins divided by the ratio with n_high - 1.

    Evaluated at the coupling and time carried by params.
    """
    if n_high < 2:
        raise DomainError(f"n_high must be >= 2, got {n_high}")
    ratios = []
    for n_spins in (n_high, n_high - 1):
        step_params = params.updated(n_spins=n_spins, basis="product")
        ratios.append(single_step(step_params, Strategy.independent(n_spins)).ratio)
    return ratios[0] / ratios[1]
