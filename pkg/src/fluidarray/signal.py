"""Narrowband far-field snapshot model and covariance estimation.

Sources at directions theta impinge on an array with element positions p as
x(t) = A(theta) s(t) + n(t), with steering phases (2 pi / lambda) p sin(theta).
Source amplitudes and noise are circular complex Gaussians, uncorrelated
across sources, elements, and snapshots.  The sample covariance
R_hat = X X^H / N_p feeds both subspace estimators and its coarray
vectorization, where entries sharing a lag are redundancy-averaged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import (
    as_float_array,
    check_angles,
    check_covariance_matrix,
    check_positive_scalar,
)
from .geometry import ArrayGeometry, DifferenceCoarray

__all__ = [
    "SourceScenario",
    "SnapshotData",
    "CovarianceEstimate",
    "steering_vector",
    "steering_matrix",
    "synthesize_snapshots",
    "model_covariance",
    "sample_covariance",
    "vectorize_covariance",
    "apply_position_error",
    "position_error_snr_loss",
    "derive_seed",
    "save_snapshots",
    "load_snapshots",
]


@dataclass(frozen=True, eq=False)
class SourceScenario:
    """Source directions, powers, noise power, and snapshot count.

    Parameters
    ----------
    doas : ndarray
        Directions in radians, strictly increasing, inside (-pi/2, pi/2).
    powers : ndarray
        Per-source powers P_l > 0 (same length as ``doas``).
    noise_power : float
        Noise variance sigma^2 >= 0 (0 models the noiseless limit).
    n_snapshots : int
        Number of snapshots N_p >= 1.
    """

    doas: np.ndarray
    powers: np.ndarray
    noise_power: float
    n_snapshots: int

    def __post_init__(self):
        doas = check_angles(self.doas)
        powers = as_float_array(self.powers, "powers")
        if powers.size != doas.size:
            raise ValueError(
                f"powers has {powers.size} entries for {doas.size} sources"
            )
        if np.any(powers <= 0):
            raise ValueError("source powers must be > 0")
        noise = check_positive_scalar(self.noise_power, "noise_power", allow_zero=True)
        n_snapshots = int(self.n_snapshots)
        if n_snapshots < 1:
            raise ValueError("n_snapshots must be >= 1")
        for arr in (doas, powers):
            arr.flags.writeable = False
        object.__setattr__(self, "doas", doas)
        object.__setattr__(self, "powers", powers)
        object.__setattr__(self, "noise_power", noise)
        object.__setattr__(self, "n_snapshots", n_snapshots)

    @property
    def n_sources(self) -> int:
        return int(self.doas.size)

    @property
    def snr_db(self) -> np.ndarray:
        """Per-source SNR 10 log10(P_l / sigma^2)."""
        if self.noise_power == 0:
            return np.full(self.n_sources, np.inf)
        return 10 * np.log10(self.powers / self.noise_power)

    def to_dict(self) -> dict:
        return {
            "doas": [float(t) for t in self.doas],
            "powers": [float(p) for p in self.powers],
            "noise_power": self.noise_power,
            "n_snapshots": self.n_snapshots,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SourceScenario":
        return cls(
            doas=np.asarray(payload["doas"], dtype=float),
            powers=np.asarray(payload["powers"], dtype=float),
            noise_power=float(payload["noise_power"]),
            n_snapshots=int(payload["n_snapshots"]),
        )


@dataclass(frozen=True, eq=False)
class SnapshotData:
    """A synthesized snapshot matrix together with its provenance."""

    samples: np.ndarray
    geometry: ArrayGeometry
    scenario: SourceScenario
    rng_seed: int | None

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=complex)
        expected = (self.geometry.n_sensors, self.scenario.n_snapshots)
        if x.shape != expected:
            raise ValueError(f"samples shape {x.shape}, expected {expected}")
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """A Hermitian PSD covariance matrix and the snapshot count behind it.

    ``n_snapshots == 0`` marks an exact (model) covariance rather than a
    sample estimate.
    """

    matrix: np.ndarray
    n_snapshots: int

    def __post_init__(self):
        R = check_covariance_matrix(self.matrix)
        n_snapshots = int(self.n_snapshots)
        if n_snapshots < 0:
            raise ValueError("n_snapshots must be >= 0")
        R.flags.writeable = False
        object.__setattr__(self, "matrix", R)
        object.__setattr__(self, "n_snapshots", n_snapshots)

    @property
    def n_sensors(self) -> int:
        return int(self.matrix.shape[0])


def steering_vector(geom: ArrayGeometry, theta: float) -> np.ndarray:
    """Unit-modulus steering vector exp(j (2 pi / lambda) p sin(theta))."""
    theta = check_angles(np.atleast_1d(theta), "theta")[0]
    phase = 2 * np.pi / geom.wavelength * geom.positions * np.sin(theta)
    return np.exp(1j * phase)


def steering_matrix(geom: ArrayGeometry, doas) -> np.ndarray:
    """N x L matrix whose columns are steering vectors at the given DOAs."""
    doas = check_angles(doas)
    phase = np.outer(geom.positions, np.sin(doas))
    return np.exp(1j * 2 * np.pi / geom.wavelength * phase)


def synthesize_snapshots(
    geom: ArrayGeometry, scenario: SourceScenario, seed: int | None = None
) -> SnapshotData:
    """Draw X = A S + noise with circular complex Gaussian amplitudes.

    The same seed reproduces the exact same snapshot matrix; ``None`` draws
    from OS entropy.
    """
    rng = np.random.default_rng(seed)
    n, n_p, n_l = geom.n_sensors, scenario.n_snapshots, scenario.n_sources
    a = steering_matrix(geom, scenario.doas)
    amplitude = np.sqrt(scenario.powers / 2.0)[:, None]
    s = amplitude * (
        rng.standard_normal((n_l, n_p)) + 1j * rng.standard_normal((n_l, n_p))
    )
    x = a @ s
    if scenario.noise_power > 0:
        sigma = np.sqrt(scenario.noise_power / 2.0)
        x = x + sigma * (
            rng.standard_normal((n, n_p)) + 1j * rng.standard_normal((n, n_p))
        )
    return SnapshotData(samples=x, geometry=geom, scenario=scenario, rng_seed=seed)


def model_covariance(geom: ArrayGeometry, scenario: SourceScenario) -> np.ndarray:
    """Exact covariance A diag(P) A^H + sigma^2 I."""
    a = steering_matrix(geom, scenario.doas)
    r = (a * scenario.powers) @ a.conj().T
    r += scenario.noise_power * np.eye(geom.n_sensors)
    return 0.5 * (r + r.conj().T)


def sample_covariance(data: SnapshotData) -> CovarianceEstimate:
    """Sample covariance R_hat = X X^H / N_p."""
    x = data.samples
    n_p = x.shape[1]
    r = x @ x.conj().T / n_p
    r = 0.5 * (r + r.conj().T)
    return CovarianceEstimate(matrix=r, n_snapshots=n_p)


def vectorize_covariance(
    cov: CovarianceEstimate | np.ndarray,
    coarray: DifferenceCoarray,
    grid: bool = False,
) -> dict:
    """Redundancy-average covariance entries onto coarray lags.

    Returns a map from lag to the mean of R[i, j] over all sensor pairs whose
    position difference equals that lag.  With ``grid=True`` the keys are the
    integers m of the on-grid lags m*d0 instead of the lag values themselves.
    Negative lags are filled as exact conjugates of their positive mirrors, so
    value(-d) == conj(value(d)) holds bitwise.
    """
    r = cov.matrix if isinstance(cov, CovarianceEstimate) else np.asarray(cov)
    expected = (coarray.n_sensors, coarray.n_sensors)
    if r.shape != expected:
        raise ValueError(f"covariance shape {r.shape}, expected {expected}")
    pair_map = coarray.grid_pairs if grid else coarray.redundancy
    out = {}
    for lag in pair_map:
        if lag < 0:
            continue
        pairs = pair_map[lag]
        value = complex(np.mean([r[i, j] for i, j in pairs]))
        out[lag] = value
        if lag > 0:
            out[-lag] = value.conjugate()
    return out


def apply_position_error(
    geom: ArrayGeometry, delta_p: float, seed: int | None = None
) -> ArrayGeometry:
    """Perturb each element by an independent U[-delta_p/2, delta_p/2] offset.

    Models imperfect fluid-element placement.  Perturbed positions are
    clamped to [0, aperture] and re-sorted so the result is a valid geometry.
    """
    delta_p = check_positive_scalar(delta_p, "delta_p", allow_zero=True)
    if delta_p == 0:
        return geom
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(-delta_p / 2.0, delta_p / 2.0, size=geom.n_sensors)
    positions = np.clip(geom.positions + offsets, 0.0, geom.aperture)
    return ArrayGeometry(
        positions=np.sort(positions),
        wavelength=geom.wavelength,
        aperture=geom.aperture,
    )


def position_error_snr_loss(delta_p: float, theta: float, wavelength: float) -> float:
    """Predicted beamforming-gain factor sinc^2(pi delta_p sin(theta) / lambda).

    Averaging exp(j 2 pi dp sin(theta) / lambda) over dp ~ U[-delta_p/2,
    delta_p/2] gives the unnormalized sinc; the expected coherent power gain
    is its square.  Returns a linear factor in (0, 1]; convert with
    -10 log10 for the loss in dB.  ``theta`` may reach +-pi/2 here (worst
    case sin(theta) = 1).
    """
    delta_p = check_positive_scalar(delta_p, "delta_p", allow_zero=True)
    wavelength = check_positive_scalar(wavelength, "wavelength")
    if abs(theta) > np.pi / 2 + 1e-12:
        raise ValueError("theta must lie in [-pi/2, pi/2]")
    # np.sinc(u) = sin(pi u) / (pi u)
    return float(np.sinc(delta_p * np.sin(theta) / wavelength) ** 2)


def derive_seed(master_seed: int, index: int) -> int:
    """Stable per-trial seed from a master seed and a trial index."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def save_snapshots(data: SnapshotData, path) -> None:
    """Dump samples as little-endian complex64, row-major, plus a JSON sidecar.

    The sidecar (``<path>.json``) records shape, dtype, seed, and the
    scenario, enough to reproduce or reload the dump.
    """
    path = Path(path)
    data.samples.astype("<c8").tofile(path)
    sidecar = {
        "dtype": "<c8",
        "order": "C",
        "shape": list(data.samples.shape),
        "seed": data.rng_seed,
        "scenario": data.scenario.to_dict(),
        "geometry": data.geometry.to_dict(),
    }
    with open(path.with_name(path.name + ".json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")


def load_snapshots(path):
    """Read a snapshot dump; returns ``(samples, sidecar_dict)``."""
    path = Path(path)
    with open(path.with_name(path.name + ".json"), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    x = np.fromfile(path, dtype=meta["dtype"]).reshape(meta["shape"])
    return x, meta
