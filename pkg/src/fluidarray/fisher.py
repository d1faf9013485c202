"""Fisher information matrices and Cramer-Rao bounds for DOA estimation.

Exact FIM for a discrete geometry, its single-source scalar reduction, and a
measure-relaxed FIM for continuous position design.  Sources are uncorrelated
circular Gaussians with known powers and noise variance, so the information
about distinct DOAs decouples entrywise and the coupling enters through the
signal-subspace projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_positive_scalar
from .exceptions import (
    DegenerateConfigurationError,
    UnidentifiableConfigurationError,
)
from .geometry import ArrayGeometry, position_moments
from .signal import SourceScenario, steering_matrix

__all__ = [
    "FisherInfo",
    "fim_exact",
    "fim_single_source",
    "crb",
    "fim_measure",
    "information_vectors",
    "SINGULAR_COND",
]

# condition number beyond which a FIM is treated as singular
SINGULAR_COND = 1e12


@dataclass(frozen=True, eq=False)
class FisherInfo:
    """A real symmetric PSD information matrix with its provenance.

    Exactly one of ``geometry`` / ``measure`` is set, recording whether the
    matrix came from discrete positions or from a design measure.
    """

    matrix: np.ndarray
    scenario: SourceScenario
    geometry: ArrayGeometry | None = None
    measure: object | None = None

    def __post_init__(self):
        F = np.asarray(self.matrix)
        if np.iscomplexobj(F):
            if np.abs(F.imag).max() > 1e-12 * max(np.abs(F.real).max(), 1e-300):
                raise ValueError("Fisher information must be real")
            F = F.real
        F = np.atleast_2d(np.asarray(F, dtype=float))
        if F.shape[0] != F.shape[1]:
            raise ValueError(f"Fisher information must be square, got {F.shape}")
        scale = np.abs(F).max()
        if scale > 0 and np.abs(F - F.T).max() > 1e-12 * scale:
            raise ValueError("Fisher information is not symmetric within tolerance")
        F = 0.5 * (F + F.T)
        if scale > 0 and np.linalg.eigvalsh(F).min() < -1e-9 * scale:
            raise ValueError("Fisher information is not PSD within tolerance")
        F.flags.writeable = False
        object.__setattr__(self, "matrix", F)

    @property
    def n_sources(self) -> int:
        return int(self.matrix.shape[0])


def _require_noise(scenario: SourceScenario) -> float:
    if scenario.noise_power <= 0:
        raise ValueError("Fisher information needs noise_power > 0")
    return scenario.noise_power


def fim_exact(geom: ArrayGeometry, scenario: SourceScenario) -> FisherInfo:
    """Exact L x L FIM (2 N_p / sigma^2) Re{D^H P_A^perp D (hadamard) R_s^T}.

    D stacks the steering derivatives da/dtheta_l with
    [da/dtheta_l]_n = j (2 pi / lambda) p_n cos(theta_l) a_l[n]; R_s is the
    diagonal source covariance.  Requires L < N and a full-column-rank
    steering matrix.
    """
    sigma2 = _require_noise(scenario)
    n, n_l = geom.n_sensors, scenario.n_sources
    if n_l >= n:
        raise DegenerateConfigurationError(
            f"projection needs fewer sources than sensors (L={n_l}, N={n})"
        )
    a = steering_matrix(geom, scenario.doas)
    s = np.linalg.svd(a, compute_uv=False)
    if s[-1] <= 0 or s[0] / s[-1] > SINGULAR_COND:
        raise DegenerateConfigurationError(
            "steering matrix is rank deficient (aliased or coincident angles)"
        )
    d = (
        1j
        * (2 * np.pi / geom.wavelength)
        * np.cos(scenario.doas)[None, :]
        * geom.positions[:, None]
        * a
    )
    q, _ = np.linalg.qr(a)
    qd = q.conj().T @ d
    gram = d.conj().T @ d
    m = gram - qd.conj().T @ qd
    F = (2 * scenario.n_snapshots / sigma2) * np.real(m * np.diag(scenario.powers))
    # the projection difference leaves rounding noise at the gram scale; clip
    # it so degenerate configurations give an exact zero
    floor = (
        (2 * scenario.n_snapshots / sigma2)
        * float(np.abs(np.diag(gram)).max() * scenario.powers.max())
        * 1e-12
    )
    F[np.abs(F) < floor] = 0.0
    return FisherInfo(matrix=0.5 * (F + F.T), scenario=scenario, geometry=geom)


def fim_single_source(geom: ArrayGeometry, scenario: SourceScenario) -> float:
    """Scalar FIM (2 N_p P / sigma^2)(4 pi^2 cos^2 theta / lambda^2) N mu_2.

    The single-source specialization of ``fim_exact``: information grows with
    the position variance mu_2, hence with deployable aperture.
    """
    sigma2 = _require_noise(scenario)
    if scenario.n_sources != 1:
        raise ValueError(
            f"single-source formula needs L=1, got L={scenario.n_sources}"
        )
    mu2 = position_moments(geom, 2)[0]
    theta = float(scenario.doas[0])
    return float(
        (2 * scenario.n_snapshots * scenario.powers[0] / sigma2)
        * (4 * np.pi**2 * np.cos(theta) ** 2 / geom.wavelength**2)
        * geom.n_sensors
        * mu2
    )


def crb(fisher_info: FisherInfo) -> list:
    """Per-source CRB variances (radians^2): the diagonal of F^-1."""
    F = fisher_info.matrix
    s = np.linalg.svd(F, compute_uv=False)
    if s[0] <= 0 or s[-1] <= s[0] / SINGULAR_COND:
        raise UnidentifiableConfigurationError(
            "Fisher information is singular; CRB undefined"
        )
    return [float(v) for v in np.diag(np.linalg.inv(F))]


def information_vectors(
    positions, center: float, scenario: SourceScenario, wavelength: float,
    n_sensors: int,
) -> np.ndarray:
    """K x L matrix of per-position information vectors h(p).

    h_l(p) = sqrt(2 N_p N P_l / sigma^2) (2 pi / lambda) cos(theta_l)
    (p - center) exp(j (2 pi / lambda) p sin(theta_l)); rows follow
    ``positions``.
    """
    sigma2 = _require_noise(scenario)
    positions = np.atleast_1d(np.asarray(positions, dtype=float))
    amp = np.sqrt(
        2.0 * scenario.n_snapshots * n_sensors * scenario.powers / sigma2
    ) * (2 * np.pi / wavelength) * np.cos(scenario.doas)
    phasor = np.exp(
        1j * (2 * np.pi / wavelength) * np.outer(positions, np.sin(scenario.doas))
    )
    return amp[None, :] * (positions - center)[:, None] * phasor


def fim_measure(measure, scenario: SourceScenario) -> FisherInfo:
    """FIM of a design measure: F(xi) = sum_k w_k Re{h(p_k) h(p_k)^H}.

    The per-position information vector h (see ``information_vectors``) is
    centered at the measure mean c_xi, so a point mass carries zero
    information.  For L = 1 and an endpoint two-atom measure this reproduces
    ``fim_single_source`` exactly; the relaxation drops the inter-source
    projection coupling, so final discrete designs are always re-scored with
    ``fim_exact``.
    """
    _require_noise(scenario)
    atoms = list(measure.atoms)
    if not atoms:
        raise ValueError("design measure has no atoms")
    pos = np.array([a[0] for a in atoms], dtype=float)
    w = np.array([a[1] for a in atoms], dtype=float)
    if np.any(w < 0):
        raise ValueError("design measure has negative weights")
    total = w.sum()
    if abs(total - 1.0) > 1e-8:
        raise ValueError(f"design measure weights sum to {total}, expected 1")
    lam = check_positive_scalar(measure.wavelength, "measure.wavelength")
    center = float(np.dot(w, pos) / total)
    h = information_vectors(pos, center, scenario, lam, measure.n_sensors)
    F = np.real((h.T * w) @ h.conj())
    return FisherInfo(matrix=0.5 * (F + F.T), scenario=scenario, measure=measure)
