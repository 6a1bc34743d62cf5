"""
Derivative-free search for postselection targets minimizing the single-step phonon ratio.

For a fixed preparation c and input state rho, a target d enters the step map only through
the sector weights w_s = sum_{k in s} conj(d_k) c_k. With B_s the sector evolution operators,

    <n>_post = (w Gn w^H) / (w G1 w^H),   Gn[s, r] = Tr(n B_s rho B_r^dagger),  G1 likewise

so both Gram matrices are computed once and every objective evaluation is O(sectors^2).
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from ..exceptions import DimensionMismatchError
from ..schema.params import ModelParams, OptimizeConfig
from .dynamics import build_evolution, spin_permutation_matrix
from .fockspace import MechState, thermal_density
from .postselect import (
    PROBABILITY_FLOOR,
    TargetBasis,
    TargetState,
    gauge_fix,
    target_bloch,
    target_collective_flat,
    target_independent,
)
from .protocol import baseline_occupancy

logger = logging.getLogger(__name__)

# Objective value for vanishing branches inside the simplex search
_VANISHED = 1e6
_FLOOR_PENALTY = 10.0


def default_preparation(params: ModelParams) -> TargetState:
    if params.basis == "collective":
        return target_collective_flat(params.n_spins)
    return target_independent(params.n_spins)


class TargetObjective:
    """Single-step ratio and probability of a target, from precomputed Gram matrices."""

    def __init__(
        self,
        params: ModelParams,
        preparation: Optional[TargetState] = None,
        initial: Optional[MechState] = None,
    ):
        self.params = params
        if preparation is None:
            preparation = default_preparation(params)
        if preparation.n_spins != params.n_spins:
            raise DimensionMismatchError(
                f"Preparation acts on {preparation.n_spins} spins, parameters have {params.n_spins}"
            )
        self.preparation = preparation.vector_in(params.basis)
        initial = initial if initial is not None else thermal_density(params.nbar, params.fock_dim)
        self.baseline = baseline_occupancy(initial)
        self.trace = initial.trace

        evolution = build_evolution(params)
        self.sector_of = evolution.sector_of
        self.n_sectors = params.n_spins + 1
        blocks = evolution.phases[:, None, None] * evolution.factors
        evolved = blocks @ initial.rho
        levels = np.arange(params.fock_dim)
        self.gram_one = np.einsum("sij,rij->sr", evolved, blocks.conj())
        self.gram_number = np.einsum("sij,rij,i->sr", evolved, blocks.conj(), levels)

    @property
    def size(self) -> int:
        return self.preparation.size

    def sector_weights(self, coefficients: np.ndarray) -> np.ndarray:
        weights = np.zeros(self.n_sectors, dtype=complex)
        np.add.at(weights, self.sector_of, np.conj(coefficients) * self.preparation)
        return weights

    def evaluate(self, coefficients: np.ndarray) -> Tuple[float, float]:
        """(ratio, probability) for unit-norm coefficients in the engine basis."""
        w = self.sector_weights(coefficients)
        collapsed = float((w @ self.gram_one @ w.conj()).real)
        probability = collapsed / self.trace
        if probability < PROBABILITY_FLOOR:
            return math.inf, 0.0
        mean = float((w @ self.gram_number @ w.conj()).real) / collapsed
        return mean / self.baseline, min(probability, 1.0)

    def canonical(self, coefficients: np.ndarray) -> np.ndarray:
        """
        Minimal-norm coefficients with the same sector weights, normalized and gauge-fixed.

        Keeps the ratio and maximizes the probability among equivalent targets.
        """
        w = self.sector_weights(coefficients)
        mass = np.zeros(self.n_sectors)
        np.add.at(mass, self.sector_of, np.abs(self.preparation) ** 2)
        scale = np.divide(np.conj(w), mass, out=np.zeros(self.n_sectors, dtype=complex), where=mass > 0)
        canonical = scale[self.sector_of] * self.preparation
        return gauge_fix(canonical / np.linalg.norm(canonical))


def evaluate_target(
    target: TargetState,
    params: ModelParams,
    preparation: Optional[TargetState] = None,
) -> Tuple[float, float]:
    """
    Single-step ratio and success probability of a postselection target.

    A vanishing branch returns (inf, 0.0) instead of raising.
    """
    objective = TargetObjective(params, preparation)
    if target.n_spins != params.n_spins:
        raise DimensionMismatchError(
            f"Target acts on {target.n_spins} spins, parameters have {params.n_spins}"
        )
    return objective.evaluate(target.vector_in(params.basis))


@dataclass
class OptimizeResult:
    target: TargetState
    ratio: float
    probability: float
    converged: bool
    evaluations: int
    restart_ratios: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "basis": self.target.basis.value,
            "coefficients": [float(c) for c in self.target.coefficients.real],
            "ratio": self.ratio,
            "probability": self.probability,
            "converged": self.converged,
            "evaluations": self.evaluations,
            "restart_ratios": list(self.restart_ratios),
        }


def optimize_target(config: OptimizeConfig, params: ModelParams) -> OptimizeResult:
    """
    Multi-start Nelder-Mead over real target coefficients.

    Coefficients are searched in unconstrained ambient coordinates and normalized inside the
    objective. Restart 0 starts from the preparation state, the rest from seeded Gaussian
    points. The winner is reported in canonical form (see TargetObjective.canonical).

    Args:
        config: Search settings (restarts, evaluation budget, tolerance, seed, floor)
        params: Model parameters; N and basis must agree with config

    Returns:
        OptimizeResult; converged is False if any winning restart hit max_evals
    """
    if (config.n_spins, config.basis) != (params.n_spins, params.basis):
        raise DimensionMismatchError(
            f"Optimizer config (N={config.n_spins}, {config.basis}) does not match parameters "
            f"(N={params.n_spins}, {params.basis})"
        )
    objective = TargetObjective(params)
    floor = config.probability_floor

    def cost(x: np.ndarray) -> float:
        norm = np.linalg.norm(x)
        if norm == 0:
            return _VANISHED
        ratio, probability = objective.evaluate(x / norm)
        if not math.isfinite(ratio):
            return _VANISHED
        if floor is not None and probability < floor:
            ratio += _FLOOR_PENALTY * (floor - probability) / floor
        return ratio

    rng = np.random.default_rng(config.seed)
    options = {"maxfev": config.max_evals, "xatol": config.tol, "fatol": config.tol, "adaptive": True}
    best = None
    restart_ratios = []
    evaluations = 0
    for restart in range(config.restarts):
        if restart == 0:
            x0 = objective.preparation.real.copy()
        else:
            x0 = rng.normal(size=objective.size)
        result = minimize(cost, x0, method="Nelder-Mead", options=options)
        evaluations += int(result.nfev)
        restart_ratios.append(float(result.fun))
        logger.debug(f"restart {restart}: cost={result.fun:.8g} success={result.success} nfev={result.nfev}")
        if best is None or result.fun < best.fun:
            best = result

    coefficients = objective.canonical(best.x / np.linalg.norm(best.x))
    ratio, probability = objective.evaluate(coefficients)
    basis = TargetBasis.COLLECTIVE if params.basis == "collective" else TargetBasis.PRODUCT
    target = TargetState(basis, coefficients.real)
    logger.info(
        f"Optimized N={params.n_spins}: ratio={ratio:.6g} probability={probability:.4g} "
        f"over {config.restarts} restarts"
    )
    if not best.success:
        logger.warning(f"Best restart stopped before reaching tol={config.tol:g} ({best.message})")
    return OptimizeResult(
        target=target,
        ratio=ratio,
        probability=probability,
        converged=bool(best.success),
        evaluations=evaluations,
        restart_ratios=restart_ratios,
    )


def bloch_scan(params: ModelParams, thetas: Sequence[float], delta: float = 0.0) -> List[Tuple[float, float, float]]:
    """(theta, ratio, probability) for single-spin targets on a Bloch meridian."""
    if params.n_spins != 1 or params.basis != "product":
        raise DimensionMismatchError("Bloch scans need a single spin in the product basis")
    objective = TargetObjective(params)
    rows = []
    for theta in thetas:
        ratio, probability = objective.evaluate(target_bloch(theta, delta).coefficients)
        rows.append((float(theta), ratio, probability))
    return rows


def permutation_distance(a: np.ndarray, b: np.ndarray, n_spins: int) -> float:
    """Smallest max-abs difference between a and b over spin relabelings and global sign."""
    a = gauge_fix(np.asarray(a, dtype=complex))
    b = np.asarray(b, dtype=complex)
    best = math.inf
    for perm in itertools.permutations(range(n_spins)):
        moved = gauge_fix(spin_permutation_matrix(n_spins, perm) @ b)
        for sign in (1, -1):
            best = min(best, float(np.max(np.abs(a - sign * moved))))
    return best
