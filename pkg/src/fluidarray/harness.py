"""Seeded Monte Carlo experiments over the design/estimation pipeline.

Each experiment sweeps one variable (aperture, SNR, source separation,
antenna count, ...) across a set of array/algorithm arms and collects RMSE
next to the matching Cramer-Rao bound in a flat ResultTable.  Runs are
deterministic: every Monte Carlo cell derives its seed from the config's
master seed and the cell's construction order, so trials could execute in
any order (or concurrently) without changing the table.  With an output
directory configured, each run writes results.csv, a manifest with a
content hash of the table, and the designed positions where applicable.
"""

import csv
import hashlib
import json
from dataclasses import dataclass, fields
from itertools import count
from functools import lru_cache
from pathlib import Path
from time import perf_counter

import numpy as np

from .design import DesignConfig, design_geometry
from .estimation import (
    EstimationConfig,
    adaptive_fas_music,
    coarray_music,
    fas_music,
    music_estimate,
)
from .fisher import crb, fim_exact
from .geometry import (
    coarray_dof,
    difference_coarray,
    make_mra,
    make_nested,
    make_ula,
    position_moments,
)
from .signal import (
    SourceScenario,
    derive_seed,
    sample_covariance,
    synthesize_snapshots,
)

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "ResultTable",
    "default_config",
    "experiment_adaptive",
    "experiment_crb_vs_D",
    "experiment_positions",
    "experiment_resolution",
    "experiment_rmse_vs_snr",
    "experiment_scaling_N",
    "load_config",
    "monte_carlo_rmse",
    "run_experiment",
    "save_config",
]

# desk-scale defaults: minutes-long runs with enough trials that statistical
# comparisons hold with ~3x tolerance
_DESK_DEFAULTS = {
    "crb-vs-d": dict(snr_db=(10.0,), trials=1),
    "rmse-vs-snr": dict(),
    "resolution": dict(snr_db=(15.0,), trials=50),
    "scaling-n": dict(snr_db=(10.0,), trials=50),
    "adaptive": dict(snr_db=(15.0, 20.0, 25.0)),
    "positions": dict(snr_db=(10.0,), trials=1),
}

# source configurations whose designed layouts the positions experiment lists
POSITION_SCENARIOS_DEG = (
    (0.0,),
    (40.0,),
    (10.0, 25.0),
    (-30.0, 30.0),
    (-40.0, 0.0, 40.0),
)

_CSV_COLUMNS = (
    "experiment",
    "array_type",
    "algorithm",
    "sweep_variable",
    "sweep_value",
    "rmse_degrees",
    "sqrt_crb_degrees",
    "trials",
    "runtime_seconds",
)


def _float_tuple(values, name):
    if values is None:
        return None
    out = tuple(float(v) for v in values)
    if not out:
        raise ValueError(f"{name} must not be empty")
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything an experiment run depends on, JSON-serializable.

    The sweep grids beyond the SNR list (aperture steps, separations,
    antenna counts) have desk-scale defaults and only apply to the
    experiment that reads them.  ``algorithms`` restricts which estimator
    arms run (None = all arms of the experiment).
    """

    experiment: str
    n_sensors: int = 6
    doas_deg: tuple = (10.0, 25.0)
    aperture_over_d0: float = 40.0
    snr_db: tuple = (-5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0)
    n_snapshots: int = 500
    trials: int = 50
    master_seed: int = 1234
    algorithms: tuple | None = None
    output_dir: str | None = None
    wavelength: float = 1.0
    d_sweep_over_d0: tuple | None = None
    separations_deg: tuple = (0.5, 1.0, 1.5, 2.0, 3.0, 5.0)
    n_antennas_sweep: tuple = (4, 5, 6, 7, 8)
    k_adapt: int = 1
    mismatched_prior_deg: tuple = (0.0, 45.0)

    def __post_init__(self):
        if not self.experiment:
            raise ValueError("experiment name must not be empty")
        if int(self.trials) < 1:
            raise ValueError("trials must be >= 1")
        if int(self.n_sensors) < 2:
            raise ValueError("n_sensors must be >= 2")
        if int(self.n_snapshots) < 1:
            raise ValueError("n_snapshots must be >= 1")
        if int(self.k_adapt) < 0:
            raise ValueError("k_adapt must be >= 0")
        if float(self.wavelength) <= 0:
            raise ValueError("wavelength must be positive")
        if float(self.aperture_over_d0) <= 0:
            raise ValueError("aperture_over_d0 must be positive")
        object.__setattr__(self, "trials", int(self.trials))
        object.__setattr__(self, "n_sensors", int(self.n_sensors))
        object.__setattr__(self, "n_snapshots", int(self.n_snapshots))
        object.__setattr__(self, "k_adapt", int(self.k_adapt))
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(self, "wavelength", float(self.wavelength))
        object.__setattr__(self, "aperture_over_d0", float(self.aperture_over_d0))
        object.__setattr__(self, "snr_db", _float_tuple(self.snr_db, "snr_db"))
        doas = _float_tuple(self.doas_deg, "doas_deg")
        if any(abs(t) >= 90.0 for t in doas):
            raise ValueError("doas_deg must lie inside (-90, 90)")
        if any(b <= a for a, b in zip(doas, doas[1:])):
            raise ValueError("doas_deg must be strictly ascending")
        object.__setattr__(self, "doas_deg", doas)
        object.__setattr__(
            self, "separations_deg", _float_tuple(self.separations_deg, "separations_deg")
        )
        object.__setattr__(
            self,
            "mismatched_prior_deg",
            _float_tuple(self.mismatched_prior_deg, "mismatched_prior_deg"),
        )
        object.__setattr__(
            self, "d_sweep_over_d0", _float_tuple(self.d_sweep_over_d0, "d_sweep_over_d0")
        )
        object.__setattr__(
            self, "n_antennas_sweep", tuple(int(n) for n in self.n_antennas_sweep)
        )
        if self.algorithms is not None:
            object.__setattr__(
                self, "algorithms", tuple(str(a) for a in self.algorithms)
            )

    @property
    def n_sources(self) -> int:
        return len(self.doas_deg)

    @property
    def d0(self) -> float:
        return self.wavelength / 2.0

    @property
    def aperture(self) -> float:
        return self.aperture_over_d0 * self.d0

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**payload)


def default_config(experiment: str, **overrides) -> ExperimentConfig:
    """Desk-scale config for a named experiment, with field overrides."""
    if experiment not in _DESK_DEFAULTS:
        raise ValueError(
            f"unknown experiment {experiment!r}; choose from "
            f"{sorted(_DESK_DEFAULTS)}"
        )
    values = dict(_DESK_DEFAULTS[experiment])
    values.update(overrides)
    return ExperimentConfig(experiment=experiment, **values)


def save_config(config: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return ExperimentConfig.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# result table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResultRow:
    """One experiment cell: an RMSE (or bound) at one sweep point."""

    experiment: str
    array_type: str
    algorithm: str
    sweep_variable: str
    sweep_value: float
    rmse_degrees: float
    sqrt_crb_degrees: float
    trials: int
    runtime_seconds: float

    def __post_init__(self):
        object.__setattr__(self, "sweep_value", float(self.sweep_value))
        object.__setattr__(self, "rmse_degrees", float(self.rmse_degrees))
        object.__setattr__(self, "sqrt_crb_degrees", float(self.sqrt_crb_degrees))
        object.__setattr__(self, "trials", int(self.trials))
        object.__setattr__(self, "runtime_seconds", float(self.runtime_seconds))
        if self.rmse_degrees < 0:
            raise ValueError("rmse_degrees must be >= 0")
        if self.sqrt_crb_degrees < 0:
            raise ValueError("sqrt_crb_degrees must be >= 0")
        if self.trials < 0:
            raise ValueError("trials must be >= 0")

    @property
    def key(self) -> tuple:
        return (self.experiment, self.array_type, self.algorithm, self.sweep_value)

    def formatted(self) -> list:
        return [
            self.experiment,
            self.array_type,
            self.algorithm,
            self.sweep_variable,
            format(self.sweep_value, ".9g"),
            format(self.rmse_degrees, ".9g"),
            format(self.sqrt_crb_degrees, ".9g"),
            str(self.trials),
            format(self.runtime_seconds, ".9g"),
        ]


class ResultTable:
    """Keyed collection of result rows with canonical CSV serialization.

    Rows are unique per (experiment, array_type, algorithm, sweep_value) and
    always written sorted, so the table's content is independent of the
    order in which cells finished.  ``content_hash`` covers everything
    except the runtime column.
    """

    def __init__(self, rows=None):
        self.rows: list = []
        self._keys: set = set()
        for row in rows or []:
            self.append(row)

    def append(self, row: ResultRow) -> None:
        if row.key in self._keys:
            raise ValueError(f"duplicate result row for key {row.key}")
        self._keys.add(row.key)
        self.rows.append(row)

    def sorted_rows(self) -> list:
        return sorted(
            self.rows,
            key=lambda r: (
                r.experiment,
                r.array_type,
                r.algorithm,
                r.sweep_variable,
                r.sweep_value,
            ),
        )

    def write_csv(self, path) -> None:
        lines = [",".join(_CSV_COLUMNS)]
        lines += [",".join(row.formatted()) for row in self.sorted_rows()]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path) -> "ResultTable":
        table = cls()
        with open(path, "r", encoding="utf-8", newline="") as fh:
            for record in csv.DictReader(fh):
                table.append(
                    ResultRow(
                        experiment=record["experiment"],
                        array_type=record["array_type"],
                        algorithm=record["algorithm"],
                        sweep_variable=record["sweep_variable"],
                        sweep_value=float(record["sweep_value"]),
                        rmse_degrees=float(record["rmse_degrees"]),
                        sqrt_crb_degrees=float(record["sqrt_crb_degrees"]),
                        trials=int(record["trials"]),
                        runtime_seconds=float(record["runtime_seconds"]),
                    )
                )
        return table

    def content_hash(self) -> str:
        lines = [",".join(_CSV_COLUMNS[:-1])]
        lines += [",".join(row.formatted()[:-1]) for row in self.sorted_rows()]
        return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Monte Carlo core
# ---------------------------------------------------------------------------


def _resolve_estimator(algorithm, config: EstimationConfig):
    if callable(algorithm):
        return algorithm
    if algorithm == "music":
        return lambda data, geom, n_sources: music_estimate(
            sample_covariance(data), geom, n_sources, config.grid_step_deg
        )
    if algorithm == "coarray-music":
        return lambda data, geom, n_sources: coarray_music(
            sample_covariance(data), geom, n_sources, config.grid_step_deg
        )
    if algorithm == "fas-music":
        return lambda data, geom, n_sources: fas_music(data, geom, n_sources, config)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def _trial_errors(result, truths: np.ndarray):
    """Sorted-matched per-source errors; short returns are padded (= failed).

    An estimator that found fewer peaks than sources still contributes the
    trial: its estimates are padded by repeating the nearest found value
    (zeros when nothing was found at all).
    """
    truths = np.sort(truths)
    estimates = np.sort(np.asarray(result.theta_hat, dtype=float))
    failed = not result.diagnostics.get("converged", True)
    if estimates.size < truths.size:
        failed = True
        if estimates.size == 0:
            estimates = np.zeros_like(truths)
        else:
            estimates = np.pad(
                estimates, (0, truths.size - estimates.size), mode="edge"
            )
    return estimates - truths, failed


def monte_carlo_rmse(
    geom,
    scenario: SourceScenario,
    algorithm,
    trials: int,
    master_seed: int,
    config: EstimationConfig | None = None,
    tally: dict | None = None,
) -> float:
    """Pooled RMSE in degrees over seeded trials of one estimator.

    RMSE = sqrt(mean over trials and sources of squared error), with
    sorted matching of estimates to truths.  Trial t draws its snapshots
    with seed derive_seed(master_seed, t), making the result reproducible
    and each trial independent.  algorithm is "music", "coarray-music",
    "fas-music", or a callable (data, geom, n_sources) -> EstimateResult.
    Failed trials (short or non-converged returns) still count; pass a
    dict as ``tally`` to get the failure count back.
    """
    trials = int(trials)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if config is None:
        config = EstimationConfig()
    estimate = _resolve_estimator(algorithm, config)
    n_sources = scenario.n_sources
    errors = []
    failures = 0
    for t in range(trials):
        data = synthesize_snapshots(geom, scenario, seed=derive_seed(master_seed, t))
        err, failed = _trial_errors(estimate(data, geom, n_sources), scenario.doas)
        errors.append(err)
        failures += bool(failed)
    if tally is not None:
        tally["failures"] = failures
    return float(np.rad2deg(np.sqrt(np.mean(np.square(errors)))))


# ---------------------------------------------------------------------------
# shared experiment plumbing
# ---------------------------------------------------------------------------


def _evaluation_scenario(config, snr_db, doas_deg=None) -> SourceScenario:
    doas = np.deg2rad(doas_deg if doas_deg is not None else config.doas_deg)
    return SourceScenario(
        doas=doas,
        powers=np.ones(doas.size),
        noise_power=10.0 ** (-float(snr_db) / 10.0),
        n_snapshots=config.n_snapshots,
    )


@lru_cache(maxsize=128)
def _design_cached(doas_deg, n, aperture, wavelength, n_snapshots):
    # designs run against a unit-noise reference scenario so a geometry
    # depends only on the source directions, never on the evaluated SNR
    reference = SourceScenario(
        doas=np.deg2rad(doas_deg),
        powers=np.ones(len(doas_deg)),
        noise_power=1.0,
        n_snapshots=n_snapshots,
    )
    result = design_geometry(
        reference,
        n,
        aperture,
        DesignConfig.for_wavelength(wavelength),
        wavelength=wavelength,
    )
    return result.geometry


def _designed_geometry(config, doas_deg=None, n=None, aperture_over_d0=None):
    doas = tuple(float(t) for t in (doas_deg or config.doas_deg))
    d_over = config.aperture_over_d0 if aperture_over_d0 is None else aperture_over_d0
    return _design_cached(
        doas,
        int(n or config.n_sensors),
        float(d_over) * config.d0,
        config.wavelength,
        config.n_snapshots,
    )


def _sqrt_crb_degrees(geom, scenario) -> float:
    """Pooled bound matching the pooled RMSE: sqrt of the mean CRB variance."""
    return float(np.rad2deg(np.sqrt(np.mean(crb(fim_exact(geom, scenario))))))


def _write_artifacts(config, table, wall_time, positions=None, errors=None):
    if config.output_dir is None:
        return
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    table.write_csv(out / "results.csv")
    outputs = ["results.csv", "manifest.json"]
    if positions is not None:
        with open(out / "positions.json", "w", encoding="utf-8") as fh:
            json.dump(positions, fh, indent=2)
            fh.write("\n")
        outputs.append("positions.json")
    manifest = {
        "experiment": config.experiment,
        "config": config.to_dict(),
        "row_count": len(table.rows),
        "results_hash": table.content_hash(),
        "wall_time_seconds": wall_time,
        "errors": errors or [],
        "outputs": outputs,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


class _CellRunner:
    """Runs one cell per call, catching errors so the sweep continues."""

    def __init__(self, config):
        self.config = config
        self.table = ResultTable()
        self.errors = []
        self._seed_counter = count()

    def next_seed(self) -> int:
        return derive_seed(self.config.master_seed, next(self._seed_counter))

    def wants(self, algorithm: str) -> bool:
        allowed = self.config.algorithms
        return allowed is None or algorithm in allowed

    def cell(self, array_type, algorithm, sweep_variable, sweep_value, compute):
        start = perf_counter()
        try:
            rmse, bound, trials = compute()
        except Exception as exc:  # recorded per-row; the sweep continues
            self.errors.append(
                {
                    "array_type": array_type,
                    "algorithm": algorithm,
                    "sweep_value": float(sweep_value),
                    "error": f"{type(exc).__name__}: {exc}",
                }
            )
            return
        self.table.append(
            ResultRow(
                experiment=self.config.experiment,
                array_type=array_type,
                algorithm=algorithm,
                sweep_variable=sweep_variable,
                sweep_value=sweep_value,
                rmse_degrees=rmse,
                sqrt_crb_degrees=bound,
                trials=trials,
                runtime_seconds=perf_counter() - start,
            )
        )


def _monte_carlo_cell(runner, geom, scenario, algorithm, est_config):
    seed = runner.next_seed()

    def compute():
        rmse = monte_carlo_rmse(
            geom, scenario, algorithm, runner.config.trials, seed, config=est_config
        )
        return rmse, _sqrt_crb_degrees(geom, scenario), runner.config.trials

    return compute


def _reference_arrays(n, d0):
    return {
        "ula": make_ula(n, d0),
        "nested": make_nested(n // 2, n - n // 2, d0),
        "mra": make_mra(n, d0),
    }


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def experiment_crb_vs_D(config: ExperimentConfig) -> ResultTable:
    """Bound-only sweep: designed-array CRB versus deployment aperture.

    The designed array is re-optimized at every aperture; ULA/nested/MRA
    references are fixed classical layouts, so their rows repeat one value
    across the sweep (horizontal reference lines).
    """
    t0 = perf_counter()
    runner = _CellRunner(config)
    grid = config.d_sweep_over_d0 or tuple(
        float(d) for d in range(4, int(round(config.aperture_over_d0)) + 1, 4)
    )
    scenario = _evaluation_scenario(config, config.snr_db[0])
    references = _reference_arrays(config.n_sensors, config.d0)
    positions = {}

    def bound_cell(geom):
        def compute():
            value = _sqrt_crb_degrees(geom, scenario)
            return value, value, 0

        return compute

    for d_over in grid:
        geom = _designed_geometry(config, aperture_over_d0=d_over)
        positions[f"fas_D{d_over:g}"] = geom.to_dict()
        runner.cell("fas", "crb", "aperture_over_d0", d_over, bound_cell(geom))
        for name, ref in references.items():
            runner.cell(name, "crb", "aperture_over_d0", d_over, bound_cell(ref))

    _write_artifacts(
        config, runner.table, perf_counter() - t0, positions, runner.errors
    )
    return runner.table


def experiment_rmse_vs_snr(config: ExperimentConfig) -> ResultTable:
    """RMSE versus SNR for classical arrays and the designed layout.

    Arms: MUSIC on a ULA, on an MRA, and on the designed array (whose bare
    spectrum saturates at the scan resolution), plus the two-stage
    estimator on the designed array.
    """
    t0 = perf_counter()
    runner = _CellRunner(config)
    est_config = EstimationConfig()
    references = _reference_arrays(config.n_sensors, config.d0)
    fas_geom = _designed_geometry(config)
    arms = [
        ("ula", "music", references["ula"]),
        ("mra", "music", references["mra"]),
        ("fas", "music", fas_geom),
        ("fas", "fas-music", fas_geom),
    ]
    for array_type, algorithm, geom in arms:
        if not runner.wants(algorithm):
            continue
        for snr in config.snr_db:
            scenario = _evaluation_scenario(config, snr)
            runner.cell(
                array_type,
                algorithm,
                "snr_db",
                snr,
                _monte_carlo_cell(runner, geom, scenario, algorithm, est_config),
            )
    _write_artifacts(
        config,
        runner.table,
        perf_counter() - t0,
        {"fas": fas_geom.to_dict()},
        runner.errors,
    )
    return runner.table


def experiment_resolution(config: ExperimentConfig) -> ResultTable:
    """RMSE versus angular separation of two sources at fixed SNR.

    The designed array is re-optimized for each source pair; the ULA is the
    classical comparison whose spectrum stops resolving narrow pairs.
    """
    t0 = perf_counter()
    runner = _CellRunner(config)
    est_config = EstimationConfig()
    snr = config.snr_db[0]
    base = config.doas_deg[0]
    ula = make_ula(config.n_sensors, config.d0)
    positions = {}
    for sep in config.separations_deg:
        doas = (base, base + sep)
        scenario = _evaluation_scenario(config, snr, doas)
        if runner.wants("fas-music"):
            geom = _designed_geometry(config, doas_deg=doas)
            positions[f"fas_sep{sep:g}"] = geom.to_dict()
            runner.cell(
                "fas",
                "fas-music",
                "separation_deg",
                sep,
                _monte_carlo_cell(runner, geom, scenario, "fas-music", est_config),
            )
        if runner.wants("music"):
            runner.cell(
                "ula",
                "music",
                "separation_deg",
                sep,
                _monte_carlo_cell(runner, ula, scenario, "music", est_config),
            )
    _write_artifacts(
        config, runner.table, perf_counter() - t0, positions, runner.errors
    )
    return runner.table


def experiment_scaling_N(config: ExperimentConfig) -> ResultTable:
    """RMSE versus antenna count for designed and classical arrays."""
    t0 = perf_counter()
    runner = _CellRunner(config)
    est_config = EstimationConfig()
    snr = config.snr_db[0]
    scenario = _evaluation_scenario(config, snr)
    positions = {}
    for n in config.n_antennas_sweep:
        arms = []
        if runner.wants("fas-music"):
            geom = _designed_geometry(config, n=n)
            positions[f"fas_N{n}"] = geom.to_dict()
            arms.append(("fas", "fas-music", geom))
        if runner.wants("music"):
            arms.append(("mra", "music", make_mra(n, config.d0)))
            arms.append(("ula", "music", make_ula(n, config.d0)))
        for array_type, algorithm, geom in arms:
            runner.cell(
                array_type,
                algorithm,
                "n_antennas",
                float(n),
                _monte_carlo_cell(runner, geom, scenario, algorithm, est_config),
            )
    _write_artifacts(
        config, runner.table, perf_counter() - t0, positions, runner.errors
    )
    return runner.table


def experiment_adaptive(config: ExperimentConfig) -> ResultTable:
    """Position knowledge sweep: oracle / mismatched-prior / adaptive arms.

    The oracle arm designs at the true directions; the mismatched arm
    designs at a fixed wrong prior; the adaptive arm starts from a plain
    half-wavelength grid and re-designs around its own estimates between
    data collections.  Adaptive rows carry the oracle-geometry bound — the
    target the adaptation converges toward (no fixed geometry of their
    own).
    """
    t0 = perf_counter()
    runner = _CellRunner(config)
    est_config = EstimationConfig()
    oracle = _designed_geometry(config)
    mismatched = _designed_geometry(config, doas_deg=config.mismatched_prior_deg)

    def adaptive_cell(scenario, oracle_bound):
        seed = runner.next_seed()

        def compute():
            errors = []
            for t in range(config.trials):
                trial_seed = derive_seed(seed, t)
                calls = count()

                def source(geom, _seed=trial_seed, _calls=calls):
                    return synthesize_snapshots(
                        geom, scenario, seed=derive_seed(_seed, next(_calls))
                    )

                result, _ = adaptive_fas_music(
                    source,
                    config.n_sensors,
                    config.aperture,
                    scenario.n_sources,
                    config.k_adapt,
                    est_config,
                    wavelength=config.wavelength,
                )
                err, _ = _trial_errors(result, scenario.doas)
                errors.append(err)
            rmse = float(np.rad2deg(np.sqrt(np.mean(np.square(errors)))))
            return rmse, oracle_bound, config.trials

        return compute

    for snr in config.snr_db:
        scenario = _evaluation_scenario(config, snr)
        for array_type, geom in (("fas-oracle", oracle), ("fas-mismatched", mismatched)):
            if runner.wants("fas-music"):
                runner.cell(
                    array_type,
                    "fas-music",
                    "snr_db",
                    snr,
                    _monte_carlo_cell(runner, geom, scenario, "fas-music", est_config),
                )
        if runner.wants("adaptive"):
            oracle_bound = _sqrt_crb_degrees(oracle, scenario)
            runner.cell(
                "fas-adaptive",
                "adaptive",
                "snr_db",
                snr,
                adaptive_cell(scenario, oracle_bound),
            )
    _write_artifacts(
        config,
        runner.table,
        perf_counter() - t0,
        {"fas_oracle": oracle.to_dict(), "fas_mismatched": mismatched.to_dict()},
        runner.errors,
    )
    return runner.table


def experiment_positions(config: ExperimentConfig) -> list:
    """Designed layouts for a set of source configurations.

    Returns one listing per configuration (geometry, coarray size, spread);
    the result table carries the matching bound rows.
    """
    t0 = perf_counter()
    runner = _CellRunner(config)
    snr = config.snr_db[0]
    listings = []
    for index, doas in enumerate(POSITION_SCENARIOS_DEG):
        geom = _designed_geometry(config, doas_deg=doas)
        dof = coarray_dof(difference_coarray(geom))
        mu2 = position_moments(geom, 2)[0]
        listings.append(
            {
                "doas_deg": list(doas),
                "geometry": geom.to_dict(),
                "positions_over_d0": [float(p / config.d0) for p in geom.positions],
                "contiguous_dof": int(dof),
                "mu2_over_d0_squared": float(mu2 / config.d0**2),
            }
        )

        def bound_cell(geom=geom, doas=doas):
            value = _sqrt_crb_degrees(geom, _evaluation_scenario(config, snr, doas))
            return value, value, 0

        runner.cell("fas", "crb", "config_index", float(index), bound_cell)
    _write_artifacts(
        config, runner.table, perf_counter() - t0, listings, runner.errors
    )
    return listings


_EXPERIMENTS = {
    "crb-vs-d": experiment_crb_vs_D,
    "rmse-vs-snr": experiment_rmse_vs_snr,
    "resolution": experiment_resolution,
    "scaling-n": experiment_scaling_N,
    "adaptive": experiment_adaptive,
    "positions": experiment_positions,
}


def run_experiment(config: ExperimentConfig):
    """Dispatch a config to its experiment by name."""
    try:
        runner = _EXPERIMENTS[config.experiment]
    except KeyError:
        raise ValueError(
            f"unknown experiment {config.experiment!r}; choose from "
            f"{sorted(_EXPERIMENTS)}"
        ) from None
    return runner(config)
