"""
Tests for the postselection target search

Objective values are checked against the protocol's own single step; searches are kept
small (few restarts, low-occupancy states) so they finish in seconds.
"""

import math

import numpy as np
import pytest

from spincool.exceptions import DimensionMismatchError
from spincool.physics.dynamics import spin_permutation_matrix
from spincool.physics.optimizer import (
    TargetObjective,
    bloch_scan,
    evaluate_target,
    optimize_target,
    permutation_distance,
)
from spincool.physics.postselect import target_corr2, target_independent
from spincool.physics.protocol import Strategy, single_step
from spincool.schema import ModelParams, OptimizeConfig

SMALL = dict(nbar=1.0, fock_dim=40)


class TestObjective:
    """Test the Gram-matrix objective"""

    def test_matches_single_step_independent(self):
        """Test ratio and probability of |+> against the protocol step"""
        params = ModelParams(coupling=0.12, **SMALL)
        ratio, probability = evaluate_target(target_independent(1), params)
        record = single_step(params, Strategy.independent(1))
        assert ratio == pytest.approx(record.ratio, abs=1e-10)
        assert probability == pytest.approx(record.step_probability, abs=1e-10)

    def test_matches_single_step_correlated(self):
        """Test the two-spin correlated target against the protocol step"""
        params = ModelParams(coupling=0.12, n_spins=2, **SMALL)
        ratio, probability = evaluate_target(target_corr2(), params)
        record = single_step(params, Strategy.correlated(target_corr2()))
        assert ratio == pytest.approx(record.ratio, abs=1e-10)
        assert probability == pytest.approx(record.step_probability, abs=1e-10)

    def test_canonical_keeps_ratio(self):
        """Test that the minimal-norm representative keeps the ratio and raises the probability"""
        params = ModelParams(coupling=0.12, n_spins=2, **SMALL)
        objective = TargetObjective(params)
        c = target_corr2().coefficients
        canonical = objective.canonical(c)
        ratio, probability = objective.evaluate(c)
        canonical_ratio, canonical_probability = objective.evaluate(canonical)
        assert np.linalg.norm(canonical) == pytest.approx(1.0)
        assert canonical_ratio == pytest.approx(ratio, abs=1e-10)
        assert canonical_probability >= probability - 1e-12

    def test_global_sign_flip(self):
        """Test that negating every coefficient leaves ratio and probability"""
        params = ModelParams(coupling=0.12, n_spins=2, **SMALL)
        objective = TargetObjective(params)
        c = target_corr2().coefficients
        ratio, probability = objective.evaluate(c)
        flipped_ratio, flipped_probability = objective.evaluate(-c)
        assert flipped_ratio == pytest.approx(ratio, abs=1e-12)
        assert flipped_probability == pytest.approx(probability, abs=1e-12)

    def test_orthogonal_target(self):
        """Test that a target orthogonal to every sector weight reports (inf, 0)"""
        params = ModelParams(coupling=0.12, n_spins=2, **SMALL)
        objective = TargetObjective(params)
        ratio, probability = objective.evaluate(np.array([0.0, 1.0, -1.0, 0.0]) / math.sqrt(2))
        assert ratio == math.inf
        assert probability == 0.0

    def test_spin_count_checked(self):
        """Test that the target must act on the parameters' spins"""
        with pytest.raises(DimensionMismatchError):
            evaluate_target(target_corr2(), ModelParams(coupling=0.12, **SMALL))


class TestBlochScan:
    """Test the single-spin meridian scan"""

    def test_plus_is_best(self):
        """Test that theta = pi/2 minimizes the ratio"""
        params = ModelParams(coupling=0.12, nbar=10.0, fock_dim=150)
        rows = bloch_scan(params, np.linspace(0, math.pi, 9))
        best = min(rows, key=lambda row: row[1])
        assert best[0] == pytest.approx(math.pi / 2)

    def test_needs_single_spin(self):
        """Test that scans reject more than one spin"""
        with pytest.raises(DimensionMismatchError):
            bloch_scan(ModelParams(n_spins=2, **SMALL), [0.0])


class TestOptimizeTarget:
    """Test the multi-start search"""

    def test_not_worse_than_preparation(self):
        """Test that the search never ends above the |+> starting point"""
        params = ModelParams(coupling=0.12, **SMALL)
        config = OptimizeConfig(n_spins=1, restarts=3, max_evals=400)
        result = optimize_target(config, params)
        plus_ratio, _ = evaluate_target(target_independent(1), params)
        assert result.ratio <= plus_ratio + 1e-9
        assert result.evaluations > 0
        assert len(result.restart_ratios) == 3

    def test_deterministic_for_seed(self):
        """Test that equal seeds give identical results"""
        params = ModelParams(coupling=0.12, n_spins=2, **SMALL)
        config = OptimizeConfig(n_spins=2, restarts=2, max_evals=300, seed=5)
        assert optimize_target(config, params).to_dict() == optimize_target(config, params).to_dict()

    def test_probability_floor_respected(self):
        """Test that a floor keeps the winner's probability near or above it"""
        params = ModelParams(coupling=0.12, n_spins=2, **SMALL)
        config = OptimizeConfig(n_spins=2, restarts=2, max_evals=600, probability_floor=0.2)
        result = optimize_target(config, params)
        assert result.probability >= 0.2 - 0.02

    def test_result_document(self):
        """Test the JSON-ready result layout"""
        params = ModelParams(coupling=0.12, **SMALL)
        result = optimize_target(OptimizeConfig(n_spins=1, restarts=1, max_evals=200), params)
        document = result.to_dict()
        assert document["basis"] == "product"
        assert len(document["coefficients"]) == 2
        assert set(document) >= {"ratio", "probability", "converged", "evaluations", "restart_ratios"}

    def test_config_must_match(self):
        """Test that optimizer config and parameters must agree on N"""
        with pytest.raises(DimensionMismatchError):
            optimize_target(OptimizeConfig(n_spins=2), ModelParams(**SMALL))


class TestPermutationDistance:
    """Test coefficient comparison up to spin relabeling"""

    def test_swapped_spins(self):
        """Test that a spin swap has zero distance"""
        c = target_corr2().coefficients
        swapped = spin_permutation_matrix(2, [1, 0]) @ c
        assert permutation_distance(c, swapped, 2) == pytest.approx(0.0, abs=1e-12)

    def test_global_sign(self):
        """Test that a global sign flip has zero distance"""
        c = target_corr2().coefficients
        assert permutation_distance(c, -c, 2) == pytest.approx(0.0, abs=1e-12)

    def test_different_targets(self):
        """Test that distinct targets are apart"""
        assert permutation_distance(target_corr2().coefficients, target_independent(2).coefficients, 2) > 0.1
