"""Tests for the two-stage DOA estimators."""

import numpy as np
import pytest

from fluidarray.estimation import (
    EstimateResult,
    EstimationConfig,
    adaptive_fas_music,
    coarray_music,
    fas_music,
    local_ml_refine,
    ml_objective,
    music_estimate,
    spatial_smooth,
)
from fluidarray.exceptions import NoContiguousCoarrayError, TooManySourcesError
from fluidarray.geometry import (
    ArrayGeometry,
    difference_coarray,
    make_mra,
    make_nested,
    make_ula,
)
from fluidarray.signal import (
    CovarianceEstimate,
    SourceScenario,
    derive_seed,
    model_covariance,
    sample_covariance,
    synthesize_snapshots,
)

D0 = 0.5
WAVELENGTH = 1.0

# grid-aligned sparse layout with a long contiguous coarray (M_c = 6) and a
# large physical aperture, the regime the two-stage estimator is built for
SPARSE_POSITIONS = np.array([0.0, 1.0, 4.0, 6.0, 34.0, 40.0]) * D0


def scenario_for(doas_deg, snr_db=10.0, n_snapshots=500):
    doas_deg = np.atleast_1d(doas_deg).astype(float)
    return SourceScenario(
        doas=np.deg2rad(doas_deg),
        powers=np.ones(doas_deg.size),
        noise_power=10.0 ** (-snr_db / 10.0),
        n_snapshots=n_snapshots,
    )


def exact_covariance(geom, scenario):
    return CovarianceEstimate(matrix=model_covariance(geom, scenario), n_snapshots=0)


def sparse_geom():
    return ArrayGeometry(
        positions=SPARSE_POSITIONS, wavelength=WAVELENGTH, aperture=40 * D0
    )


# ---------------------------------------------------------------------------
# EstimateResult


def test_result_requires_sorted_estimates():
    with pytest.raises(ValueError):
        EstimateResult(
            theta_hat=np.deg2rad([25.0, 10.0]),
            theta_coarse=None,
            spectrum=None,
            diagnostics={"converged": True},
        )


def test_result_rejects_out_of_range_estimates():
    with pytest.raises(ValueError):
        EstimateResult(
            theta_hat=np.array([0.1, np.pi / 2]),
            theta_coarse=None,
            spectrum=None,
            diagnostics={"converged": True},
        )


def test_result_estimates_read_only():
    res = EstimateResult(
        theta_hat=np.deg2rad([10.0, 25.0]),
        theta_coarse=None,
        spectrum=None,
        diagnostics={"converged": True},
    )
    with pytest.raises(ValueError):
        res.theta_hat[0] = 0.0


# ---------------------------------------------------------------------------
# standard MUSIC


def test_music_noiseless_single_source_half_step_accuracy():
    geom = make_ula(6, D0)
    sc = scenario_for([10.0], snr_db=np.inf)
    res = music_estimate(exact_covariance(geom, sc), geom, 1)
    assert res.theta_hat.shape == (1,)
    # worst case is half the scan step (grid-level accuracy by design)
    assert abs(np.rad2deg(res.theta_hat[0]) - 10.0) <= 0.01 + 1e-9
    assert res.diagnostics["converged"]


def test_music_off_grid_source_with_coarse_grid():
    # quantization error stays below half the scan step
    geom = make_ula(8, D0)
    sc = scenario_for([10.3], snr_db=np.inf)
    res = music_estimate(exact_covariance(geom, sc), geom, 1, grid_step_deg=0.5)
    assert abs(np.rad2deg(res.theta_hat[0]) - 10.3) <= 0.25


def test_music_two_sources_finite_snr():
    geom = make_ula(6, D0)
    sc = scenario_for([-20.0, 30.0], snr_db=20.0)
    data = synthesize_snapshots(geom, sc, seed=11)
    res = music_estimate(sample_covariance(data), geom, 2)
    assert res.theta_hat.shape == (2,)
    np.testing.assert_allclose(
        np.rad2deg(res.theta_hat), [-20.0, 30.0], atol=0.5
    )
    assert np.all(np.diff(res.theta_hat) > 0)


@pytest.mark.parametrize("n_sources", [6, 7])
def test_music_too_many_sources(n_sources):
    geom = make_ula(6, D0)
    sc = scenario_for([10.0])
    with pytest.raises(TooManySourcesError):
        music_estimate(exact_covariance(geom, sc), geom, n_sources)


def test_music_spectrum_sampled_over_open_scan_range():
    geom = make_ula(6, D0)
    sc = scenario_for([10.0], snr_db=np.inf)
    res = music_estimate(exact_covariance(geom, sc), geom, 1)
    angles, values = res.spectrum
    assert angles.shape == values.shape
    assert angles[0] > -np.pi / 2 and angles[-1] < np.pi / 2
    assert np.all(values > 0)
    # the sampled spectrum peaks at the source
    assert abs(np.rad2deg(angles[np.argmax(values)]) - 10.0) <= 0.02


def test_music_reports_partial_peaks_when_grid_cannot_host_them():
    # a 30-degree grid has 6 scan points and so at most 2 separated interior
    # maxima; asking for 3 sources must return what was found, flagged
    geom = make_ula(6, D0)
    sc = scenario_for([0.0], snr_db=np.inf)
    res = music_estimate(exact_covariance(geom, sc), geom, 3, grid_step_deg=30.0)
    assert not res.diagnostics["converged"]
    assert res.theta_hat.size < 3


def test_virtual_spectrum_unambiguous_where_physical_array_is_not():
    # the virtual half-wavelength ULA spectrum of one noiseless source has a
    # single above-half-max peak, while the physical sparse layout carries
    # strong sidelobe correlation far from the source (the grating-lobe
    # mechanism that defeats plain MUSIC at scale)
    from scipy.signal import find_peaks

    from fluidarray.signal import steering_matrix, steering_vector

    geom = sparse_geom()
    sc = scenario_for([10.0], snr_db=np.inf)
    cov = exact_covariance(geom, sc)

    res_virt = coarray_music(cov, geom, 1)
    _, virt_values = res_virt.spectrum
    peaks, _ = find_peaks(virt_values, height=0.5 * np.max(virt_values))
    assert peaks.size == 1

    angles = np.deg2rad(np.arange(-89.9, 90.0, 0.02))
    far = np.abs(np.sin(angles) - np.sin(np.deg2rad(10.0))) >= 0.25

    def worst_far_correlation(g):
        a0 = steering_vector(g, np.deg2rad(10.0))
        grid = steering_matrix(g, angles)
        return np.max(np.abs(grid.conj().T @ a0)[far]) / g.n_sensors

    sparse_corr = worst_far_correlation(geom)
    ula_corr = worst_far_correlation(make_ula(6, D0))
    assert sparse_corr > 0.5
    assert sparse_corr > 1.5 * ula_corr


# ---------------------------------------------------------------------------
# coarray MUSIC


def test_coarray_music_resolves_more_sources_than_sensors():
    # 6 physical elements, 8 sources: impossible for standard MUSIC
    geom = make_nested(3, 3, D0)
    doas_deg = np.linspace(-52.5, 52.5, 8)
    sc = scenario_for(doas_deg, snr_db=np.inf)
    res = coarray_music(exact_covariance(geom, sc), geom, 8)
    assert res.theta_hat.shape == (8,)
    np.testing.assert_allclose(np.rad2deg(res.theta_hat), doas_deg, atol=0.5)
    with pytest.raises(TooManySourcesError):
        music_estimate(exact_covariance(geom, sc), geom, 8)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_coarray_music_coarse_accuracy_at_moderate_snr(seed):
    geom = make_mra(6, D0)
    sc = scenario_for([10.0, 25.0], snr_db=10.0)
    data = synthesize_snapshots(geom, sc, seed=seed)
    res = coarray_music(sample_covariance(data), geom, 2)
    np.testing.assert_allclose(np.rad2deg(res.theta_hat), [10.0, 25.0], atol=2.0)


def test_coarray_music_no_contiguous_segment_raises():
    # no pairwise difference lands on the half-wavelength grid
    geom = ArrayGeometry(
        positions=np.array([0.0, 0.3, 1.1]), wavelength=WAVELENGTH, aperture=1.1
    )
    assert difference_coarray(geom).contiguous_half_length == 0
    sc = scenario_for([10.0])
    with pytest.raises(NoContiguousCoarrayError):
        coarray_music(exact_covariance(geom, sc), geom, 1)


def test_coarray_music_source_limit_is_subarray_size():
    # ULA of 4: M_c = 3, so M_s = 4 and at most 3 sources
    geom = make_ula(4, D0)
    doas_deg = [-30.0, 0.0, 30.0]
    sc = scenario_for(doas_deg, snr_db=np.inf)
    res = coarray_music(exact_covariance(geom, sc), geom, 3)
    np.testing.assert_allclose(np.rad2deg(res.theta_hat), doas_deg, atol=0.5)
    sc4 = scenario_for([-30.0, 0.0, 20.0, 40.0], snr_db=np.inf)
    with pytest.raises(TooManySourcesError):
        coarray_music(exact_covariance(geom, sc4), geom, 4)


def test_coarray_music_diagnostics_record_virtual_array():
    geom = make_mra(6, D0)  # M_c = 13
    sc = scenario_for([10.0, 25.0], snr_db=np.inf)
    res = coarray_music(exact_covariance(geom, sc), geom, 2)
    assert res.diagnostics["contiguous_half_length"] == 13
    assert res.diagnostics["subarray_size"] == 14
    assert res.diagnostics["converged"]
    np.testing.assert_array_equal(res.theta_coarse, res.theta_hat)


def test_spatial_smoothing_restores_rank():
    # noiseless uncorrelated sources: smoothed covariance has rank exactly L
    geom = make_nested(3, 3, D0)
    sc = scenario_for([-40.0, 5.0, 35.0], snr_db=np.inf)
    coarray = difference_coarray(geom)
    m_c = coarray.contiguous_half_length
    from fluidarray.signal import vectorize_covariance

    z = vectorize_covariance(exact_covariance(geom, sc), coarray, grid=True)
    segment = np.array([z[m] for m in range(-m_c, m_c + 1)])
    m_s = (2 * m_c + 1) // 2 + 1
    r_ss = spatial_smooth(segment, m_s)
    assert r_ss.shape == (m_s, m_s)
    eigvals = np.linalg.eigvalsh(r_ss)[::-1]
    assert eigvals[2] / eigvals[3] > 1e6  # rank-3 gap


def test_spatial_smooth_validates_window():
    with pytest.raises(ValueError):
        spatial_smooth(np.ones(5, dtype=complex), 6)
    with pytest.raises(ValueError):
        spatial_smooth(np.ones(5, dtype=complex), 0)


# ---------------------------------------------------------------------------
# local ML refinement


def test_ml_refine_noiseless_converges_to_truth():
    geom = make_mra(6, D0)
    sc = scenario_for([10.0, 25.0], snr_db=np.inf)
    cov = exact_covariance(geom, sc)
    coarse = np.deg2rad([11.0, 24.0])
    refined, info = local_ml_refine(cov, geom, coarse)
    np.testing.assert_allclose(refined, np.deg2rad([10.0, 25.0]), atol=1e-6)
    assert info["converged"]
    # perfect model fit: residual objective is numerically zero
    assert info["objective"] <= 1e-10 * np.real(np.trace(cov.matrix))


@pytest.mark.parametrize("seed", [3, 4, 5])
def test_ml_refine_never_worse_than_start(seed):
    geom = sparse_geom()
    sc = scenario_for([10.0, 25.0], snr_db=5.0)
    data = synthesize_snapshots(geom, sc, seed=seed)
    cov = sample_covariance(data)
    coarse = np.deg2rad([12.0, 23.5])
    refined, info = local_ml_refine(cov, geom, coarse)
    assert info["objective"] <= ml_objective(coarse, cov, geom) + 1e-12
    assert refined.shape == (2,)


def test_ml_refine_box_excludes_truth_lands_on_boundary():
    # ULA correlation is monotone inside the mainlobe, so with the truth at
    # 10 degrees and the box at [16, 20] the lower edge is the constrained
    # optimum
    geom = make_ula(6, D0)
    sc = scenario_for([10.0], snr_db=np.inf)
    cov = exact_covariance(geom, sc)
    coarse = np.deg2rad([18.0])
    refined, info = local_ml_refine(cov, geom, coarse, delta=np.deg2rad(2.0))
    assert abs(np.rad2deg(refined[0]) - 16.0) <= 1e-3
    assert info["converged"]
    assert info["objective"] > 1e-6


def test_ml_refine_duplicate_starts_survive_rank_deficiency():
    geom = make_mra(6, D0)
    sc = scenario_for([10.0, 13.0], snr_db=np.inf)
    cov = exact_covariance(geom, sc)
    coarse = np.deg2rad([11.5, 11.5])  # rank-deficient steering at the start
    refined, info = local_ml_refine(cov, geom, coarse)
    assert refined.shape == (2,)
    assert info["objective"] <= ml_objective(np.deg2rad([11.5, 11.5001]), cov, geom)


def test_ml_objective_gradient_matches_finite_differences():
    geom = sparse_geom()
    sc = scenario_for([10.0, 25.0], snr_db=10.0)
    data = synthesize_snapshots(geom, sc, seed=7)
    cov = sample_covariance(data)
    theta = np.deg2rad([9.4, 25.7])
    _, grad = ml_objective(theta, cov, geom, with_gradient=True)
    step = 1e-7
    for k in range(2):
        bump = np.zeros(2)
        bump[k] = step
        fd = (
            ml_objective(theta + bump, cov, geom)
            - ml_objective(theta - bump, cov, geom)
        ) / (2 * step)
        np.testing.assert_allclose(grad[k], fd, rtol=1e-5)


# ---------------------------------------------------------------------------
# two-stage FAS-MUSIC


def test_fas_music_noiseless_recovers_exactly():
    geom = sparse_geom()
    sc = scenario_for([10.0, 25.0], snr_db=np.inf)
    data = synthesize_snapshots(geom, sc, seed=0)
    res = fas_music(data, geom, 2)
    np.testing.assert_allclose(res.theta_hat, np.deg2rad([10.0, 25.0]), atol=1e-6)
    assert res.diagnostics["converged"]
    assert res.diagnostics["contiguous_half_length"] == 6
    assert res.diagnostics["subarray_size"] == 7
    assert res.diagnostics["ml_iterations"] >= 1
    assert res.theta_coarse.shape == (2,)


@pytest.mark.parametrize("seed", range(5))
def test_fas_music_high_snr_precision(seed):
    geom = sparse_geom()
    sc = scenario_for([10.0, 25.0], snr_db=25.0)
    data = synthesize_snapshots(geom, sc, seed=seed)
    res = fas_music(data, geom, 2)
    err_deg = np.rad2deg(res.theta_hat) - np.array([10.0, 25.0])
    assert np.max(np.abs(err_deg)) <= 0.003


def test_fas_music_refinement_improves_on_coarse_stage():
    geom = sparse_geom()
    sc = scenario_for([10.0, 25.0], snr_db=15.0)
    data = synthesize_snapshots(geom, sc, seed=21)
    res = fas_music(data, geom, 2)
    cov = sample_covariance(data)
    assert ml_objective(res.theta_hat, cov, geom) <= ml_objective(
        np.sort(res.theta_coarse), cov, geom
    ) + 1e-12


def test_fas_music_stage1_errors_propagate():
    geom = ArrayGeometry(
        positions=np.array([0.0, 0.3, 1.1]), wavelength=WAVELENGTH, aperture=1.1
    )
    sc = scenario_for([10.0], n_snapshots=50)
    data = synthesize_snapshots(geom, sc, seed=1)
    with pytest.raises(NoContiguousCoarrayError):
        fas_music(data, geom, 1)


def test_fas_music_merged_coarse_peaks_still_yield_two_estimates():
    # closely spaced sources can merge into one stage-1 peak; the rescue path
    # duplicates it and widens the search box instead of giving up
    geom = sparse_geom()
    sc = scenario_for([10.0, 11.0], snr_db=20.0, n_snapshots=2000)
    data = synthesize_snapshots(geom, sc, seed=5)
    res = fas_music(data, geom, 2)
    assert res.theta_hat.shape == (2,)
    np.testing.assert_allclose(np.rad2deg(res.theta_hat), [10.0, 11.0], atol=0.5)


def test_fas_music_escapes_neighboring_fringe_basin():
    # a four-element layout with one far outrigger has likelihood basins at
    # every grating fringe; descending only from the coarse stage-1 point
    # lands in the wrong basin for this noise draw, so the box scan must
    # surface the true one (regression for the multi-start arbitration)
    geom = ArrayGeometry(
        positions=np.array([0.0, 1.0, 3.0, 40.0]) * D0,
        wavelength=1.0,
        aperture=20.0,
    )
    sc = scenario_for([10.0, 25.0], snr_db=10.0)
    data = synthesize_snapshots(geom, sc, seed=derive_seed(808, 37))
    res = fas_music(data, geom, 2)
    np.testing.assert_allclose(np.rad2deg(res.theta_hat), [10.0, 25.0], atol=0.2)


# ---------------------------------------------------------------------------
# adaptive loop


def make_data_source(doas_deg, snr_db, n_snapshots=500, master_seed=0):
    """Hidden-scenario callback: fresh data for whatever geometry is given."""
    calls = []

    def source(geom):
        sc = scenario_for(doas_deg, snr_db=snr_db, n_snapshots=n_snapshots)
        calls.append(geom)
        return synthesize_snapshots(geom, sc, seed=master_seed + len(calls))

    source.calls = calls
    return source


def test_adaptive_k0_is_plain_estimation_at_uniform_positions():
    source = make_data_source([10.0, 25.0], snr_db=15.0)
    res, geom = adaptive_fas_music(source, n=6, aperture=20.0, n_sources=2, k_adapt=0)
    # uniform half-wavelength start: contiguous by construction
    np.testing.assert_allclose(geom.positions, np.arange(6) * D0)
    assert len(source.calls) == 1
    reference = fas_music(
        synthesize_snapshots(
            geom, scenario_for([10.0, 25.0], snr_db=15.0), seed=1
        ),
        geom,
        2,
    )
    np.testing.assert_allclose(res.theta_hat, reference.theta_hat)
    assert res.diagnostics["adapt_iterations"] == 0


def test_adaptive_one_iteration_widens_aperture_and_stays_accurate():
    source = make_data_source([10.0, 25.0], snr_db=15.0)
    res, geom = adaptive_fas_music(source, n=6, aperture=20.0, n_sources=2, k_adapt=1)
    assert len(source.calls) == 2
    assert geom.positions[-1] - geom.positions[0] > 5 * D0  # left the tiny ULA
    assert np.all(np.diff(np.sort(geom.positions)) >= 0.4 * D0 - 1e-9)
    np.testing.assert_allclose(np.rad2deg(res.theta_hat), [10.0, 25.0], atol=0.2)
    assert res.diagnostics["adapt_iterations"] == 1
    assert res.diagnostics["design_fallbacks"] == []


def test_adaptive_infeasible_design_keeps_previous_geometry():
    from fluidarray.design import DesignConfig

    source = make_data_source([10.0, 25.0], snr_db=15.0)
    config = EstimationConfig(design=DesignConfig(d_min=0.6))
    res, geom = adaptive_fas_music(
        source, n=6, aperture=3.0, n_sources=2, k_adapt=1, config=config
    )
    # 6 elements at spacing 0.6 need 3.6 > 3.0: design fails, geometry kept
    np.testing.assert_allclose(geom.positions, np.arange(6) * D0)
    assert res.diagnostics["design_fallbacks"] == [1]
