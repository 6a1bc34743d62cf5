"""
Tests for closed-system spin-mechanics evolution

Checks the spin-basis bookkeeping, the block-diagonal evolution against a brute-force
integration of the full Hamiltonian, and the analytic coherent-branch forms.
"""

import math

import numpy as np
import pytest

from spincool.exceptions import (
    ConvergenceError,
    DimensionMismatchError,
    DomainError,
    UnsupportedCouplingError,
)
from spincool.physics.dynamics import (
    QuantumState,
    branch_pair_weight,
    build_evolution,
    coherent_branch,
    coherent_ratio_closed_form,
    collective_to_product,
    dicke_embedding,
    evolve_brute_force,
    evolve_closed,
    sector_labels,
    spin_permutation_matrix,
    traced_mean_phonon,
    up_counts,
)
from spincool.physics.fockspace import (
    coherent_density,
    coherent_vector,
    mean_phonon,
    rotation,
    thermal_density,
    trace_distance,
)
from spincool.physics.postselect import postselect, target_bloch
from spincool.schema import ModelParams

PLUS = np.array([1.0, 1.0]) / math.sqrt(2)


class TestSpinBasis:
    """Test spin labels and basis maps"""

    def test_product_up_counts(self):
        """Test that index 0 is all-up and the last index all-down"""
        np.testing.assert_array_equal(up_counts(2, "product"), [2, 1, 1, 0])
        np.testing.assert_array_equal(up_counts(3, "collective"), [3, 2, 1, 0])

    def test_sector_labels(self):
        """Test s = 2n - N for product and m = n - N/2 for collective"""
        np.testing.assert_allclose(sector_labels(2, "product"), [-2, 0, 2])
        np.testing.assert_allclose(sector_labels(2, "collective"), [-1, 0, 1])

    def test_dicke_embedding_is_isometry(self):
        """Test that the symmetric sector embeds with orthonormal columns"""
        embedding = dicke_embedding(3)
        np.testing.assert_allclose(embedding.conj().T @ embedding, np.eye(4), atol=1e-12)

    def test_spin_swap(self):
        """Test that swapping two spins exchanges |up,down> and |down,up>"""
        swap = spin_permutation_matrix(2, [1, 0])
        np.testing.assert_array_equal(swap @ np.array([0, 1, 0, 0]), [0, 0, 1, 0])

    def test_invalid_permutation(self):
        """Test that a non-permutation is rejected"""
        with pytest.raises(DomainError):
            spin_permutation_matrix(2, [0, 0])

    def test_state_shape_checked(self):
        """Test that a joint matrix of the wrong size is rejected"""
        with pytest.raises(DimensionMismatchError):
            QuantumState(np.eye(10), n_spins=1, fock_dim=4)


class TestBuildEvolution:
    """Test the block-diagonal evolution operator"""

    def test_four_spin_amplitude(self):
        """Test |alpha| = 4 * coupling * |eta| for the all-up sector of four spins"""
        params = ModelParams(coupling=0.12, n_spins=4, fock_dim=30)
        evolution = build_evolution(params)
        assert abs(evolution.amplitudes[4]) == pytest.approx(0.679, abs=1e-3)

    def test_block_follows_sector(self):
        """Test that each spin index uses the operator of its up-count sector"""
        params = ModelParams(coupling=0.1, n_spins=2, fock_dim=20)
        evolution = build_evolution(params)
        np.testing.assert_allclose(evolution.block(1), evolution.sector_operator(1))
        np.testing.assert_allclose(evolution.block(0), evolution.sector_operator(2))

    def test_unequal_couplings_rejected(self):
        """Test that per-spin couplings must be equal"""
        params = ModelParams(coupling=0.1, n_spins=2, fock_dim=20)
        with pytest.raises(UnsupportedCouplingError):
            build_evolution(params, couplings=[0.1, 0.2])

    def test_coupling_count_checked(self):
        """Test that the number of couplings must match N"""
        params = ModelParams(coupling=0.1, n_spins=2, fock_dim=20)
        with pytest.raises(DimensionMismatchError):
            build_evolution(params, couplings=[0.1])

    def test_equal_couplings_accepted(self):
        """Test that equal per-spin couplings reproduce the shared-coupling evolution"""
        params = ModelParams(coupling=0.1, n_spins=2, fock_dim=20)
        np.testing.assert_allclose(
            build_evolution(params, couplings=[0.1, 0.1]).factors, build_evolution(params).factors
        )


class TestEvolveClosed:
    """Test blockwise evolution of joint states"""

    def test_zero_coupling_is_free_rotation(self):
        """Test that lambda = 0 rotates the mechanics only"""
        params = ModelParams(coupling=0.0, time=1.0, nbar=0.0, fock_dim=20)
        mech = coherent_density(0.8, 20)
        state = QuantumState.from_product(PLUS, mech)
        evolved = evolve_closed(state, params).reduced_mechanics()
        r = rotation(1.0, 20)
        assert trace_distance(evolved, r @ mech.rho @ r.conj().T) < 1e-12

    def test_trace_preserved(self):
        """Test that unitary evolution keeps the joint trace"""
        params = ModelParams(coupling=0.12, nbar=1.0, n_spins=2, fock_dim=40)
        spins = np.full(4, 0.5)
        state = QuantumState.from_product(spins, thermal_density(1.0, 40))
        assert evolve_closed(state, params).trace == pytest.approx(state.trace, abs=1e-10)

    def test_spin_traced_heating(self):
        """Test that tracing out the spin adds 2 lambda^2 (1 - cos t) phonons"""
        params = ModelParams(coupling=0.12, time=math.pi, nbar=10.0, fock_dim=150)
        thermal = thermal_density(10.0, 150)
        evolved = evolve_closed(QuantumState.from_product(PLUS, thermal), params)
        gained = mean_phonon(evolved.reduced_mechanics()) - mean_phonon(thermal)
        assert gained == pytest.approx(4 * 0.12 ** 2, abs=1e-6)
        assert traced_mean_phonon(math.pi, 0.12, 10.0) == pytest.approx(10.0576, abs=1e-4)

    def test_mismatched_parameters(self):
        """Test that state and parameter dimensions must agree"""
        params = ModelParams(coupling=0.1, fock_dim=30)
        state = QuantumState.from_product(PLUS, thermal_density(1.0, 20))
        with pytest.raises(DimensionMismatchError):
            evolve_closed(state, params)

    @pytest.mark.parametrize("n_spins", [2, 4])
    def test_collective_matches_product_with_doubled_coupling(self, n_spins):
        """Test that the collective engine at 2*lambda equals the product engine at lambda"""
        d = 30
        flat = np.full(n_spins + 1, 1 / math.sqrt(n_spins + 1))
        mech = thermal_density(1.0, d)
        product_params = ModelParams(coupling=0.05, nbar=1.0, n_spins=n_spins, fock_dim=d)
        collective_params = product_params.updated(coupling=0.1, basis="collective")

        product = evolve_closed(
            QuantumState.from_product(dicke_embedding(n_spins) @ flat, mech), product_params
        )
        collective = evolve_closed(
            QuantumState.from_product(flat, mech, basis="collective"), collective_params
        )
        lifted = collective_to_product(collective)
        assert np.max(np.abs(lifted.rho - product.rho)) < 1e-12

    def test_spin_permutation_commutes(self):
        """Test that relabelling the spins of an asymmetric input commutes with evolution"""
        d = 10
        params = ModelParams(coupling=0.1, nbar=0.5, n_spins=3, fock_dim=d)
        rng = np.random.default_rng(3)
        spins = rng.normal(size=8) + 1j * rng.normal(size=8)
        spins /= np.linalg.norm(spins)
        lift = np.kron(spin_permutation_matrix(3, [1, 2, 0]), np.eye(d))
        state = QuantumState.from_product(spins, thermal_density(0.5, d))
        relabelled_first = evolve_closed(state.with_rho(lift @ state.rho @ lift.T), params)
        evolved = evolve_closed(state, params)
        np.testing.assert_allclose(relabelled_first.rho, lift @ evolved.rho @ lift.T, atol=1e-12)


class TestBruteForce:
    """Test the block construction against direct integration"""

    def test_single_spin_agreement(self):
        """Test that RK4 on the full Hamiltonian reproduces the block evolution"""
        params = ModelParams(coupling=0.12, nbar=1.0, fock_dim=40)
        state = QuantumState.from_product(PLUS, thermal_density(1.0, 40))
        exact = evolve_closed(state, params)
        integrated = evolve_brute_force(state, params, steps=4000)
        assert trace_distance(exact.rho, integrated.rho) < 1e-6

    def test_two_spin_coherent_agreement(self):
        """Test agreement for two spins driven from a coherent state"""
        params = ModelParams(coupling=0.1, nbar=0.0, n_spins=2, fock_dim=30)
        state = QuantumState.from_product(np.full(4, 0.5), coherent_density(0.5, 30))
        exact = evolve_closed(state, params)
        integrated = evolve_brute_force(state, params, steps=4000)
        assert trace_distance(exact.rho, integrated.rho) < 1e-6

    def test_too_few_steps(self):
        """Test that under-resolved integration reports its residual"""
        params = ModelParams(coupling=0.12, nbar=0.5, fock_dim=10)
        state = QuantumState.from_product(PLUS, thermal_density(0.5, 10))
        with pytest.raises(ConvergenceError) as info:
            evolve_brute_force(state, params, steps=100)
        assert info.value.residual is not None

    def test_size_limit(self):
        """Test that three spins are refused"""
        params = ModelParams(coupling=0.1, nbar=0.5, n_spins=3, fock_dim=10)
        state = QuantumState.from_product(np.full(8, 8 ** -0.5), thermal_density(0.5, 10))
        with pytest.raises(DomainError):
            evolve_brute_force(state, params, steps=4000)


class TestCoherentBranches:
    """Test analytic coherent-state forms"""

    @pytest.mark.parametrize("n", [0, 1, 2])
    def test_branch_matches_operator(self, n):
        """Test that each sector maps |beta> to exp(i phase)|amplitude>"""
        params = ModelParams(coupling=0.1, nbar=0.0, n_spins=2, fock_dim=40)
        evolution = build_evolution(params)
        branch = coherent_branch(n, 0.5, params)
        evolved = evolution.sector_operator(n) @ coherent_vector(0.5, 40)
        overlap = np.vdot(coherent_vector(branch.amplitude, 40), evolved)
        expected = evolution.phases[n] * np.exp(1j * branch.phase)
        assert abs(overlap - expected) < 1e-8

    def test_branch_range(self):
        """Test that up-counts outside 0..N are rejected"""
        with pytest.raises(DomainError):
            coherent_branch(3, 0.5, ModelParams(n_spins=2))

    def test_diagonal_pair_weight(self):
        """Test that n == m gives the real binomial weight"""
        params = ModelParams(coupling=0.1, n_spins=2)
        weight = branch_pair_weight(1, 1, params)
        assert weight.imag == 0
        assert weight.real == pytest.approx(0.25)


class TestCoherentClosedForm:
    """Test the coherent-state ratio after postselecting |up> at t = pi"""

    @pytest.mark.parametrize("coupling", [0.1, 0.2, 0.3, 0.4, 0.5])
    def test_simulation_matches_closed_form(self, coupling):
        """Test (1 - 2 lambda / beta)^2 against the simulated branch for beta = 1"""
        initial = coherent_density(1.0, 40)
        params = ModelParams(coupling=coupling, time=math.pi, fock_dim=40)
        state = evolve_closed(QuantumState.from_product(PLUS, initial), params)
        outcome = postselect(state, target_bloch(0.0, 0.0))
        ratio = mean_phonon(outcome.state) / mean_phonon(initial)
        assert ratio == pytest.approx(coherent_ratio_closed_form(coupling, 1.0), abs=1e-6)

    def test_full_cancellation(self):
        """Test that lambda = beta / 2 returns the branch to the vacuum"""
        initial = coherent_density(1.0, 40)
        params = ModelParams(coupling=0.5, time=math.pi, fock_dim=40)
        state = evolve_closed(QuantumState.from_product(PLUS, initial), params)
        assert mean_phonon(postselect(state, target_bloch(0.0, 0.0)).state) < 1e-6

    @pytest.mark.parametrize("beta", [0.0, -1.0])
    def test_nonpositive_amplitude(self, beta):
        """Test that beta must be positive"""
        with pytest.raises(DomainError):
            coherent_ratio_closed_form(0.1, beta)
