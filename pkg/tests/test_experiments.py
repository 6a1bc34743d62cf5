"""
Tests for named experiments

Every experiment runs on a scaled-down configuration (low occupancy, small truncation,
few points) so the table layout and metadata can be checked in seconds.
"""

import math

import numpy as np
import pandas as pd
import pytest

from spincool.config import load_config
from spincool.exceptions import VanishingBranchError
from spincool.experiments import (
    ExperimentResult,
    _run_records,
    records_table,
    run_experiment,
)
from spincool.physics.protocol import IterationRecord

SMALL = ["nbar=1.0", "fock_dim=40"]


def _config(experiment, *overrides):
    return load_config(experiment, overrides=[*SMALL, *overrides])


class TestExperimentResult:
    """Test result bookkeeping"""

    def test_save_writes_sidecars(self, tmp_path):
        """Test that tables and documents are written with config sidecars"""
        result = ExperimentResult("demo")
        result.tables["table"] = pd.DataFrame({"a": [1.0]})
        result.documents["doc"] = {"b": 2}
        paths = result.save(str(tmp_path), "csv", {"experiment": "demo"})
        assert [p.name for p in paths] == ["table.csv", "doc.json"]
        assert (tmp_path / "table.config.json").exists()
        assert (tmp_path / "doc.config.json").exists()

    def test_partial_records_kept(self):
        """Test that a vanishing branch keeps the rows produced before it"""
        done = [IterationRecord(1, 0.5, 0.5, 0.8, 0.8, 0.5, 0.5)]

        def fail():
            raise VanishingBranchError(1e-15, iteration=2, records=done)

        result = ExperimentResult("demo")
        assert _run_records(result, "curve", fail) is None
        assert len(result.tables["curve"]) == 1
        assert isinstance(result.failure, VanishingBranchError)

    def test_records_table_columns(self):
        """Test the protocol table header"""
        assert list(records_table([]).columns) == ["iter", "mean_phonon", "ratio", "dx", "dy", "p_step", "p_cum"]


class TestExperiments:
    """Test scaled-down experiment runs"""

    def test_fig1(self):
        """Test the (t, lambda) grid tables"""
        result = run_experiment(_config("fig1", "t_points=4", "lambda_points=5", "lambda_max=0.2"))
        assert list(result.tables) == ["fig1_ratio", "fig1_variance"]
        ratio = result.tables["fig1_ratio"]
        assert list(ratio.columns) == ["t", "lambda", "ratio"]
        assert len(ratio) == 20
        assert ratio["t"].max() == pytest.approx(math.pi)
        assert result.metadata["best_ratio"] < 1.0

    def test_fig1_reports_half_pi_optimum(self):
        """Test the coupling optimum on the t = pi/2 column"""
        result = run_experiment(_config("fig1", "t_points=4", "lambda_points=5", "lambda_max=0.2"))
        ratio = result.tables["fig1_ratio"]
        column = ratio[np.isclose(ratio["t"], math.pi / 2)]
        assert len(column) == 5
        assert result.metadata["ratio_at_half_pi"] == pytest.approx(column["ratio"].min())
        assert result.metadata["best_lambda_at_half_pi"] in set(column["lambda"])
        assert result.metadata["best_ratio"] <= result.metadata["ratio_at_half_pi"]

    def test_fig2(self):
        """Test ratio and enhancement tables"""
        result = run_experiment(
            _config("fig2", "spin_counts=[1,2]", "lambda_points=3", "enhancement_max=3")
        )
        assert list(result.tables["fig2_ratio"].columns) == ["n_spins", "lambda", "ratio", "probability"]
        assert len(result.tables["fig2_ratio"]) == 6
        assert list(result.tables["fig2_enhancement"]["n_high"]) == [2, 3]

    def test_fig3(self):
        """Test one table per spin count"""
        result = run_experiment(_config("fig3", "spin_counts=[1,2]", "iterations=2"))
        assert set(result.tables) == {"fig3_N1", "fig3_N2"}
        assert len(result.tables["fig3_N2"]) == 2
        assert result.failure is None

    def test_fig6_summary(self):
        """Test one summary row per curve with the sixth-iteration probability"""
        result = run_experiment(_config("fig6", "iterations=6"))
        summary = result.tables["fig6_summary"]
        assert list(summary.columns) == ["curve", "final_ratio", "p_cum", "p_cum_k6", "expected_restarts"]
        assert list(summary["curve"]) == ["N2", "N3", "N4", "N2_corr", "N3_corr"]
        np.testing.assert_allclose(summary["p_cum_k6"], summary["p_cum"])

    def test_collective(self):
        """Test the collective table and Fock histograms"""
        result = run_experiment(_config("collective", "n_spins=4", "coupling=0.1", "iterations=2"))
        assert set(result.tables) == {
            "collective",
            "collective_fock",
            "collective_fock_initial",
            "collective_single_spin",
        }
        assert len(result.tables["collective_fock"]) == 40
        assert result.tables["collective_fock"]["probability"].sum() == pytest.approx(1.0)

    def test_collective_matched_cooling(self):
        """Test the single-spin comparison at matched cooling"""
        result = run_experiment(
            _config("collective", "n_spins=4", "coupling=0.1", "iterations=2", "match_iterations=30")
        )
        single = result.metadata["single_spin"]
        table = result.tables["collective_single_spin"]
        assert single["coupling"] == pytest.approx(0.12)
        assert len(table) == single["matched_iterations"] <= 30
        assert single["matched_p_cum"] == pytest.approx(table["p_cum"].iloc[-1])
        reached = table["mean_phonon"].iloc[-1] <= result.metadata["final_mean_phonon"]
        assert single["matched_cooling_reached"] == reached
        if reached:
            assert (table["mean_phonon"].iloc[:-1] > result.metadata["final_mean_phonon"]).all()

    def test_open(self):
        """Test a one-iteration noisy run"""
        result = run_experiment(
            load_config("open", overrides=["nbar=0.5", "fock_dim=12", "iterations=1"])
        )
        assert len(result.tables["open"]) == 1
        assert result.metadata["quality_factor"] == pytest.approx(1000.0)

    def test_optimize_reference(self):
        """Test that the two-spin search reports the reference comparison"""
        result = run_experiment(_config("optimize", "restarts=2", "max_evals=300"))
        document = result.documents["optimize"]
        assert document["n_spins"] == 2
        assert document["reference"]["name"] == "corr2"
        assert set(document["reference"]) >= {"coefficient_distance", "canonical_distance", "ratio_not_worse"}

    def test_estimate_coupling(self):
        """Test the gradient sweep table"""
        result = run_experiment(load_config("estimate-coupling"))
        table = result.tables["estimate_coupling"]
        assert len(table) == 13
        assert result.metadata["coupling"] == pytest.approx(6.385e-3, rel=1e-3)
