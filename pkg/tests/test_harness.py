"""Tests for the experiment runner: configs, result tables, Monte Carlo."""

import json

import numpy as np
import pytest

from fluidarray.estimation import EstimateResult
from fluidarray.geometry import ArrayGeometry
from fluidarray.harness import (
    ExperimentConfig,
    ResultRow,
    ResultTable,
    default_config,
    experiment_adaptive,
    experiment_crb_vs_D,
    experiment_positions,
    experiment_resolution,
    experiment_rmse_vs_snr,
    experiment_scaling_N,
    load_config,
    monte_carlo_rmse,
    run_experiment,
    save_config,
)
from fluidarray.signal import SourceScenario

D0 = 0.5

# grid-aligned sparse layout with a healthy contiguous coarray; cheap enough
# for many Monte Carlo trials in a unit test
SPARSE_POSITIONS = np.array([0.0, 1.0, 4.0, 6.0, 34.0, 40.0]) * D0


def sparse_geom():
    return ArrayGeometry(positions=SPARSE_POSITIONS, wavelength=1.0, aperture=20.0)


def scenario_for(doas_deg, snr_db=10.0, n_snapshots=500):
    doas_deg = np.atleast_1d(doas_deg).astype(float)
    return SourceScenario(
        doas=np.deg2rad(doas_deg),
        powers=np.ones(doas_deg.size),
        noise_power=10.0 ** (-snr_db / 10.0),
        n_snapshots=n_snapshots,
    )


def fixed_estimator(estimates_deg):
    """An 'estimator' that ignores the data and returns fixed angles."""

    def estimate(data, geom, n_sources):
        return EstimateResult(
            theta_hat=np.deg2rad(np.sort(np.atleast_1d(estimates_deg))),
            theta_coarse=None,
            spectrum=None,
            diagnostics={"converged": True},
        )

    return estimate


def make_row(**kw):
    args = dict(
        experiment="rmse-vs-snr",
        array_type="fas",
        algorithm="fas-music",
        sweep_variable="snr_db",
        sweep_value=10.0,
        rmse_degrees=0.01,
        sqrt_crb_degrees=0.005,
        trials=50,
        runtime_seconds=1.0,
    )
    args.update(kw)
    return ResultRow(**args)


# ---------------------------------------------------------------------------
# ExperimentConfig
# ---------------------------------------------------------------------------

def test_config_requires_at_least_one_trial():
    with pytest.raises(ValueError):
        default_config("rmse-vs-snr", trials=0)


def test_config_requires_snr_values():
    with pytest.raises(ValueError):
        default_config("rmse-vs-snr", snr_db=())


def test_config_requires_ascending_doas():
    with pytest.raises(ValueError):
        default_config("rmse-vs-snr", doas_deg=(25.0, 10.0))


def test_config_n_sources_tracks_doas():
    config = default_config("rmse-vs-snr", doas_deg=(-5.0, 10.0, 40.0))
    assert config.n_sources == 3


def test_default_config_rejects_unknown_experiment():
    with pytest.raises(ValueError):
        default_config("no-such-experiment")


def test_config_json_round_trip(tmp_path):
    config = default_config("adaptive", trials=7, master_seed=99)
    path = tmp_path / "config.json"
    save_config(config, path)
    assert load_config(path) == config


def test_default_configs_cover_all_experiments():
    for name in (
        "crb-vs-d",
        "rmse-vs-snr",
        "resolution",
        "scaling-n",
        "adaptive",
        "positions",
    ):
        assert default_config(name).experiment == name


# ---------------------------------------------------------------------------
# ResultTable
# ---------------------------------------------------------------------------

def test_result_row_rejects_negative_rmse():
    with pytest.raises(ValueError):
        make_row(rmse_degrees=-0.1)


def test_result_table_rejects_duplicate_key():
    table = ResultTable()
    table.append(make_row())
    with pytest.raises(ValueError):
        table.append(make_row(rmse_degrees=0.02))


def test_result_table_same_sweep_value_different_algorithm_ok():
    table = ResultTable()
    table.append(make_row(algorithm="music"))
    table.append(make_row(algorithm="fas-music"))
    assert len(table.rows) == 2


def test_result_table_csv_round_trip(tmp_path):
    table = ResultTable()
    table.append(make_row(sweep_value=25.0, rmse_degrees=0.123456789123))
    table.append(make_row(sweep_value=10.0, rmse_degrees=3.5e-05))
    path = tmp_path / "results.csv"
    table.write_csv(path)

    text = path.read_text()
    header = text.splitlines()[0]
    assert header == (
        "experiment,array_type,algorithm,sweep_variable,sweep_value,"
        "rmse_degrees,sqrt_crb_degrees,trials,runtime_seconds"
    )
    # floats carry 9 significant digits, no more
    assert "0.123456789" in text and "0.1234567891" not in text

    again = ResultTable.from_csv(path)
    assert again.content_hash() == table.content_hash()


def test_result_table_rows_sorted_on_write(tmp_path):
    table = ResultTable()
    table.append(make_row(sweep_value=25.0))
    table.append(make_row(sweep_value=-5.0))
    table.append(make_row(algorithm="music", sweep_value=25.0))
    path = tmp_path / "results.csv"
    table.write_csv(path)
    values = [line.split(",")[4] for line in path.read_text().splitlines()[1:]]
    assert values == ["-5", "25", "25"]  # grouped by algorithm, then sweep value


def test_content_hash_ignores_runtime():
    a = ResultTable()
    b = ResultTable()
    a.append(make_row(runtime_seconds=1.0))
    b.append(make_row(runtime_seconds=2.0))
    assert a.content_hash() == b.content_hash()
    b2 = ResultTable()
    b2.append(make_row(rmse_degrees=0.011))
    assert b2.content_hash() != a.content_hash()


# ---------------------------------------------------------------------------
# monte_carlo_rmse
# ---------------------------------------------------------------------------

def test_monte_carlo_requires_trials():
    with pytest.raises(ValueError):
        monte_carlo_rmse(sparse_geom(), scenario_for([10.0]), "music", 0, 1)


def test_monte_carlo_rejects_unknown_algorithm():
    with pytest.raises(ValueError):
        monte_carlo_rmse(sparse_geom(), scenario_for([10.0]), "fancy-music", 2, 1)


def test_monte_carlo_noiseless_fas_music_is_tiny():
    geom = sparse_geom()
    sc = SourceScenario(
        doas=np.deg2rad([10.0, 25.0]),
        powers=np.ones(2),
        noise_power=0.0,
        n_snapshots=200,
    )
    rmse = monte_carlo_rmse(geom, sc, "fas-music", 3, master_seed=7)
    assert rmse < 1e-4


def test_monte_carlo_is_deterministic():
    geom = sparse_geom()
    sc = scenario_for([10.0, 25.0], snr_db=10.0)
    first = monte_carlo_rmse(geom, sc, "fas-music", 5, master_seed=42)
    second = monte_carlo_rmse(geom, sc, "fas-music", 5, master_seed=42)
    assert first == second
    assert first != monte_carlo_rmse(geom, sc, "fas-music", 5, master_seed=43)


def test_monte_carlo_pools_errors_over_sources():
    # fixed estimates 0.1 deg above both truths -> RMSE exactly 0.1
    sc = scenario_for([10.0, 25.0])
    rmse = monte_carlo_rmse(
        sparse_geom(), sc, fixed_estimator([10.1, 25.1]), 4, master_seed=0
    )
    np.testing.assert_allclose(rmse, 0.1, rtol=1e-12)


def test_monte_carlo_tallies_short_estimates():
    # one estimate for two sources: padded with its own value, tallied
    sc = scenario_for([10.0, 25.0])
    tally = {}
    rmse = monte_carlo_rmse(
        sparse_geom(), sc, fixed_estimator([10.0]), 3, master_seed=0, tally=tally
    )
    assert tally["failures"] == 3
    np.testing.assert_allclose(rmse, 15.0 / np.sqrt(2.0), rtol=1e-12)


# ---------------------------------------------------------------------------
# experiments (miniature configs; desk-scale runs live in the acceptance suite)
# ---------------------------------------------------------------------------

def test_run_experiment_rejects_unknown_name():
    config = default_config("rmse-vs-snr")
    object.__setattr__(config, "experiment", "mystery")
    with pytest.raises(ValueError):
        run_experiment(config)


def test_crb_experiment_rows_and_artifacts(tmp_path):
    config = default_config(
        "crb-vs-d", d_sweep_over_d0=(20.0, 40.0), output_dir=str(tmp_path)
    )
    table = experiment_crb_vs_D(config)

    fas = {r.sweep_value: r for r in table.rows if r.array_type == "fas"}
    assert set(fas) == {20.0, 40.0}
    # more aperture, more information
    assert fas[40.0].sqrt_crb_degrees < fas[20.0].sqrt_crb_degrees
    for row in table.rows:
        assert row.algorithm == "crb"
        assert row.trials == 0
        assert row.rmse_degrees == row.sqrt_crb_degrees
    # fixed reference arrays appear at every sweep point with constant CRB
    for array_type in ("ula", "nested", "mra"):
        values = {r.sqrt_crb_degrees for r in table.rows if r.array_type == array_type}
        assert len(values) == 1

    assert (tmp_path / "results.csv").exists()
    assert (tmp_path / "manifest.json").exists()
    positions = json.loads((tmp_path / "positions.json").read_text())
    assert set(positions) == {"fas_D20", "fas_D40"}
    for entry in positions.values():
        assert entry["positions"] == sorted(entry["positions"])


def test_snr_experiment_rows_and_crb_monotone():
    config = default_config(
        "rmse-vs-snr", snr_db=(15.0, 25.0), trials=2, algorithms=("fas-music",)
    )
    table = experiment_rmse_vs_snr(config)
    rows = [r for r in table.rows if r.algorithm == "fas-music"]
    assert {r.sweep_value for r in rows} == {15.0, 25.0}
    assert all(r.array_type == "fas" for r in rows)
    assert all(r.trials == 2 for r in rows)
    by_snr = {r.sweep_value: r for r in rows}
    assert by_snr[25.0].sqrt_crb_degrees < by_snr[15.0].sqrt_crb_degrees
    assert all(r.rmse_degrees > 0 for r in rows)


def test_snr_experiment_algorithm_filter():
    config = default_config(
        "rmse-vs-snr", snr_db=(20.0,), trials=1, algorithms=("music",)
    )
    table = experiment_rmse_vs_snr(config)
    assert {r.algorithm for r in table.rows} == {"music"}
    assert {r.array_type for r in table.rows} == {"ula", "mra", "fas"}


def test_resolution_experiment_designs_per_separation():
    config = default_config(
        "resolution", separations_deg=(3.0,), trials=2, algorithms=("fas-music",)
    )
    table = experiment_resolution(config)
    assert {r.sweep_variable for r in table.rows} == {"separation_deg"}
    row = next(r for r in table.rows if r.algorithm == "fas-music")
    assert row.sweep_value == 3.0 and row.rmse_degrees > 0


def test_scaling_experiment_reproducible(tmp_path):
    config = default_config(
        "scaling-n", n_antennas_sweep=(4,), trials=2, output_dir=str(tmp_path / "a")
    )
    first = experiment_scaling_N(config)
    second = experiment_scaling_N(
        default_config(
            "scaling-n", n_antennas_sweep=(4,), trials=2, output_dir=str(tmp_path / "b")
        )
    )
    assert first.content_hash() == second.content_hash()
    assert {r.array_type for r in first.rows} == {"fas", "mra", "ula"}

    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["results_hash"] == first.content_hash()
    assert manifest["experiment"] == "scaling-n"
    assert manifest["wall_time_seconds"] >= 0.0
    assert manifest["errors"] == []


def test_adaptive_experiment_emits_all_three_arms():
    config = default_config("adaptive", snr_db=(20.0,), trials=2)
    table = experiment_adaptive(config)
    arms = {(r.array_type, r.algorithm) for r in table.rows}
    assert arms == {
        ("fas-oracle", "fas-music"),
        ("fas-mismatched", "fas-music"),
        ("fas-adaptive", "adaptive"),
    }
    assert all(r.sweep_value == 20.0 for r in table.rows)
    assert all(r.rmse_degrees > 0 for r in table.rows)


def test_positions_experiment_listings(tmp_path):
    config = default_config("positions", output_dir=str(tmp_path))
    listings = experiment_positions(config)
    assert len(listings) >= 3
    for entry in listings:
        positions = np.asarray(entry["geometry"]["positions"])
        assert np.all(np.diff(positions) >= 0.4 * D0 - 1e-9)
        assert entry["contiguous_dof"] % 2 == 1
        assert len(entry["doas_deg"]) >= 1

    saved = json.loads((tmp_path / "positions.json").read_text())
    assert len(saved) == len(listings)
    table = ResultTable.from_csv(tmp_path / "results.csv")
    assert len(table.rows) == len(listings)
