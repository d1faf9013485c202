"""Thin scikit-learn style wrappers around the functional estimators.

Each class stores its constructor parameters verbatim (so ``clone`` and
``get_params`` behave), does all the work in ``fit``, and exposes the
outcome through trailing-underscore attributes.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .design import design_geometry
from .estimation import EstimationConfig, fas_music, music_estimate
from .signal import (
    CovarianceEstimate,
    SnapshotData,
    SourceScenario,
    sample_covariance,
)

__all__ = ["FasMusicEstimator", "FrankWolfeDesigner", "MusicEstimator"]


def _as_covariance(X, geometry):
    """Adapt fit input to a covariance estimate.

    Accepts SnapshotData, a CovarianceEstimate, an N x N Hermitian matrix,
    or a raw N x T snapshot matrix (T snapshots as columns).
    """
    if isinstance(X, SnapshotData):
        return sample_covariance(X)
    if isinstance(X, CovarianceEstimate):
        return X
    x = np.asarray(X, dtype=complex)
    if x.ndim != 2:
        raise ValueError("expected a 2-D snapshot or covariance matrix")
    if x.shape[0] != geometry.n_sensors:
        raise ValueError(
            f"input has {x.shape[0]} rows, geometry has {geometry.n_sensors} sensors"
        )
    if x.shape[0] == x.shape[1] and np.allclose(x, x.conj().T):
        return CovarianceEstimate(x, 0)
    r = x @ x.conj().T / x.shape[1]
    return CovarianceEstimate(0.5 * (r + r.conj().T), x.shape[1])


class MusicEstimator(BaseEstimator):
    """Standard MUSIC on a fixed array geometry.

    fit(X) accepts snapshots or a covariance (see _as_covariance); the
    estimated DOAs land in ``doas_`` (radians, ascending) and the full
    outcome in ``result_``.
    """

    def __init__(self, geometry=None, n_sources=1, grid_step_deg=0.02):
        self.geometry = geometry
        self.n_sources = n_sources
        self.grid_step_deg = grid_step_deg

    def fit(self, X, y=None):
        if self.geometry is None:
            raise ValueError("geometry must be set before fit")
        cov = _as_covariance(X, self.geometry)
        self.result_ = music_estimate(
            cov, self.geometry, self.n_sources, self.grid_step_deg
        )
        self.doas_ = self.result_.theta_hat
        return self

    def predict(self, X=None):
        if not hasattr(self, "doas_"):
            raise NotFittedError("call fit before predict")
        return self.doas_


class FasMusicEstimator(BaseEstimator):
    """Two-stage coarray-MUSIC + local-ML estimator on a fixed geometry."""

    def __init__(self, geometry=None, n_sources=1, config=None):
        self.geometry = geometry
        self.n_sources = n_sources
        self.config = config

    def fit(self, X, y=None):
        if self.geometry is None:
            raise ValueError("geometry must be set before fit")
        data = X if isinstance(X, SnapshotData) else _as_covariance(X, self.geometry)
        self.result_ = fas_music(data, self.geometry, self.n_sources, self.config)
        self.doas_ = self.result_.theta_hat
        return self

    def predict(self, X=None):
        if not hasattr(self, "doas_"):
            raise NotFittedError("call fit before predict")
        return self.doas_


class FrankWolfeDesigner(BaseEstimator):
    """Continuous position designer: fit on a scenario, read positions_.

    fit(X) accepts a SourceScenario or a plain array of DOAs in radians
    (unit powers, unit noise, 500 snapshots assumed in that case).  Fitted
    attributes: ``positions_``, ``geometry_``, ``result_``.
    """

    def __init__(self, n_sensors=6, aperture=20.0, config=None, wavelength=1.0):
        self.n_sensors = n_sensors
        self.aperture = aperture
        self.config = config
        self.wavelength = wavelength

    def fit(self, X, y=None):
        if isinstance(X, SourceScenario):
            scenario = X
        else:
            doas = np.sort(np.atleast_1d(np.asarray(X, dtype=float)))
            scenario = SourceScenario(
                doas=doas,
                powers=np.ones(doas.size),
                noise_power=1.0,
                n_snapshots=500,
            )
        self.result_ = design_geometry(
            scenario,
            self.n_sensors,
            self.aperture,
            self.config,
            wavelength=self.wavelength,
        )
        self.geometry_ = self.result_.geometry
        self.positions_ = self.geometry_.positions
        return self
