"""DOA estimators: MUSIC, coarray MUSIC, and two-stage refinement.

The centerpiece is the two-stage estimator for sparse large-aperture
layouts: Stage 1 runs spatial-smoothing MUSIC on the contiguous segment of
the difference coarray (a virtual half-wavelength ULA, free of grating-lobe
ambiguity), Stage 2 refines those coarse estimates by concentrated
maximum-likelihood search over a small box using the full physical array.
An adaptive variant re-designs the antenna positions around the current
estimates between data collections.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.signal import find_peaks

from .design import DesignConfig, design_geometry
from .exceptions import (
    DegenerateConfigurationError,
    InfeasibleSpacingError,
    NoContiguousCoarrayError,
    TooManySourcesError,
)
from .geometry import ArrayGeometry, difference_coarray
from .signal import (
    CovarianceEstimate,
    SnapshotData,
    SourceScenario,
    sample_covariance,
    steering_matrix,
    vectorize_covariance,
)

__all__ = [
    "EstimateResult",
    "EstimationConfig",
    "adaptive_fas_music",
    "coarray_music",
    "fas_music",
    "local_ml_refine",
    "ml_objective",
    "music_estimate",
    "spatial_smooth",
]

_ANGLE_LIMIT = np.pi / 2 - 1e-9


@dataclass(frozen=True)
class EstimationConfig:
    """Tunables shared by the estimators.

    grid_step_deg: spectrum scan resolution; delta_deg: half-width of the
    Stage-2 search box; design: position-design overrides for the adaptive
    loop (None = wavelength-derived defaults).
    """

    grid_step_deg: float = 0.02
    delta_deg: float = 5.0
    design: DesignConfig | None = None

    def __post_init__(self):
        if not (0 < float(self.grid_step_deg) <= 10.0):
            raise ValueError("grid_step_deg must be in (0, 10] degrees")
        if not (0 < float(self.delta_deg) < 90.0):
            raise ValueError("delta_deg must be in (0, 90) degrees")


@dataclass(frozen=True, eq=False)
class EstimateResult:
    """Estimated DOAs plus the evidence that produced them.

    theta_hat holds the final estimates in radians, ascending.  theta_coarse
    holds the Stage-1 estimates where a coarse stage ran.  spectrum is the
    sampled pseudo-spectrum (angles, values) of the scan that located the
    peaks.  diagnostics records the virtual-array dimensions, the refinement
    iteration count, and the converged flag.
    """

    theta_hat: np.ndarray
    theta_coarse: np.ndarray | None
    spectrum: tuple | None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta_hat, dtype=float))
        if theta.ndim != 1:
            raise ValueError("theta_hat must be a vector")
        if theta.size and np.any(np.abs(theta) >= np.pi / 2):
            raise ValueError("estimates must lie strictly inside (-90, 90) deg")
        if theta.size > 1 and np.any(np.diff(theta) < 0):
            raise ValueError("theta_hat must be sorted ascending")
        theta.flags.writeable = False
        object.__setattr__(self, "theta_hat", theta)
        if self.theta_coarse is not None:
            coarse = np.atleast_1d(np.asarray(self.theta_coarse, dtype=float))
            if coarse.size and np.any(np.abs(coarse) >= np.pi / 2):
                raise ValueError("coarse estimates out of scan range")
            coarse.flags.writeable = False
            object.__setattr__(self, "theta_coarse", coarse)
        if self.spectrum is not None:
            angles, values = self.spectrum
            angles = np.asarray(angles, dtype=float)
            values = np.asarray(values, dtype=float)
            if angles.shape != values.shape:
                raise ValueError("spectrum angles/values shape mismatch")
            angles.flags.writeable = False
            values.flags.writeable = False
            object.__setattr__(self, "spectrum", (angles, values))
        if "converged" not in self.diagnostics:
            raise ValueError("diagnostics must record a converged flag")
        object.__setattr__(self, "diagnostics", dict(self.diagnostics))

    @property
    def n_found(self) -> int:
        return int(self.theta_hat.size)


def _covariance_matrix(cov) -> np.ndarray:
    if isinstance(cov, CovarianceEstimate):
        return cov.matrix
    r = np.asarray(cov, dtype=complex)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError("covariance must be a square matrix")
    return r


def _scan_grid(grid_step_deg: float) -> np.ndarray:
    # Midpoint sampling of the open interval: cell centers never touch the
    # endfire singularities and keep the worst-case quantization at step/2.
    step = float(grid_step_deg)
    return np.deg2rad(np.arange(-90.0 + step / 2, 90.0, step))


def _music_spectrum(matrix, geom, n_sources, grid_step_deg):
    """Noise-subspace pseudo-spectrum sampled over the open scan range."""
    n = matrix.shape[0]
    _, vecs = np.linalg.eigh(matrix)
    noise_basis = vecs[:, : n - n_sources]
    angles = _scan_grid(grid_step_deg)
    steering = steering_matrix(geom, angles)
    denom = np.sum(np.abs(noise_basis.conj().T @ steering) ** 2, axis=0)
    values = 1.0 / np.maximum(denom, 1e-18 * n)
    return angles, values


def _pick_peaks(angles, values, n_sources):
    """L largest well-separated peaks, reported at the scan resolution.

    Grid-level accuracy (worst case half a step) is deliberate: sub-grid
    precision is the job of the maximum-likelihood refinement stage, which
    searches continuously instead of interpolating a sampled spectrum.
    """
    peaks, _ = find_peaks(values, distance=2)
    order = np.argsort(values[peaks], kind="stable")[::-1][:n_sources]
    chosen = np.sort(peaks[order])
    return angles[chosen].copy(), chosen.size == n_sources


def music_estimate(
    R_hat,
    geom: ArrayGeometry,
    n_sources: int,
    grid_step_deg: float = 0.02,
) -> EstimateResult:
    """Standard MUSIC on the physical array.

    Raises too-many-sources when n_sources >= N.  If the spectrum offers
    fewer than n_sources separated peaks, the found ones are returned with
    converged=False.
    """
    matrix = _covariance_matrix(R_hat)
    n_sources = int(n_sources)
    if n_sources < 1:
        raise ValueError("need at least one source")
    if n_sources >= geom.n_sensors:
        raise TooManySourcesError(
            f"MUSIC needs n_sources < N; got {n_sources} >= {geom.n_sensors}"
        )
    if matrix.shape[0] != geom.n_sensors:
        raise ValueError("covariance size does not match the geometry")
    angles, values = _music_spectrum(matrix, geom, n_sources, grid_step_deg)
    theta, complete = _pick_peaks(angles, values, n_sources)
    return EstimateResult(
        theta_hat=theta,
        theta_coarse=None,
        spectrum=(angles, values),
        diagnostics={
            "ml_iterations": 0,
            "converged": bool(complete),
        },
    )


def spatial_smooth(segment: np.ndarray, subarray_size: int) -> np.ndarray:
    """Forward spatial smoothing of a virtual-ULA signal vector.

    Averages z_k z_k^H over all ascending-lag sliding windows z_k of the
    given length; the result has rank L for L uncorrelated sources even
    though the input is a single snapshot-like vector.
    """
    z = np.asarray(segment, dtype=complex).ravel()
    m_s = int(subarray_size)
    if not (1 <= m_s <= z.size):
        raise ValueError("subarray size must be in [1, len(segment)]")
    count = z.size - m_s + 1
    r_ss = np.zeros((m_s, m_s), dtype=complex)
    for k in range(count):
        window = z[k : k + m_s]
        r_ss += np.outer(window, window.conj())
    r_ss /= count
    return 0.5 * (r_ss + r_ss.conj().T)


def coarray_music(
    R_hat,
    geom: ArrayGeometry,
    n_sources: int,
    grid_step_deg: float = 0.02,
) -> EstimateResult:
    """Stage-1 coarse estimation on the contiguous difference coarray.

    Redundancy-averages the covariance onto grid lags, extracts the
    contiguous segment, restores rank by spatial smoothing with subarray
    size M_s = floor(N_c/2) + 1, and runs MUSIC against virtual
    half-wavelength ULA steering vectors — unambiguous by construction.
    """
    matrix = _covariance_matrix(R_hat)
    n_sources = int(n_sources)
    if n_sources < 1:
        raise ValueError("need at least one source")
    coarray = difference_coarray(geom)
    m_c = coarray.contiguous_half_length
    if m_c == 0:
        raise NoContiguousCoarrayError(
            "difference coarray has no contiguous segment beyond lag zero"
        )
    n_c = 2 * m_c + 1
    m_s = n_c // 2 + 1
    if n_sources > m_s - 1:
        raise TooManySourcesError(
            f"coarray MUSIC supports at most {m_s - 1} sources here; "
            f"got {n_sources}"
        )
    lag_values = vectorize_covariance(matrix, coarray, grid=True)
    segment = np.array([lag_values[m] for m in range(-m_c, m_c + 1)])
    r_ss = spatial_smooth(segment, m_s)
    d0 = geom.wavelength / 2.0
    virtual = ArrayGeometry(
        positions=np.arange(m_s) * d0,
        wavelength=geom.wavelength,
        aperture=(m_s - 1) * d0,
    )
    angles, values = _music_spectrum(r_ss, virtual, n_sources, grid_step_deg)
    theta, complete = _pick_peaks(angles, values, n_sources)
    return EstimateResult(
        theta_hat=theta,
        theta_coarse=theta,
        spectrum=(angles, values),
        diagnostics={
            "contiguous_half_length": m_c,
            "subarray_size": m_s,
            "ml_iterations": 0,
            "converged": bool(complete),
        },
    )


def ml_objective(theta, cov, geom: ArrayGeometry, with_gradient: bool = False):
    """Concentrated negative log-likelihood tr{(I - P_A(theta)) R_hat}.

    With ``with_gradient=True`` also returns the analytic gradient
    -2 Re diag{A^+ R_hat Pi_perp dA/dtheta}.  Raises degenerate-configuration
    when the steering matrix loses rank (e.g. duplicated angles).
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if np.any(np.abs(theta) >= np.pi / 2):
        raise ValueError("angles must lie strictly inside (-pi/2, pi/2)")
    r = _covariance_matrix(cov)
    # steering columns built directly: unlike scenario DOAs, optimizer
    # iterates may tie or arrive unsorted
    scale = 2.0 * np.pi / geom.wavelength
    a = np.exp(1j * scale * geom.positions[:, None] * np.sin(theta))
    q, tri = np.linalg.qr(a)
    diag = np.abs(np.diag(tri))
    if diag.min() < 1e-10 * diag.max():
        raise DegenerateConfigurationError(
            "steering matrix is rank-deficient at the requested angles"
        )
    qh_r = q.conj().T @ r
    value = float(np.real(np.trace(r)) - np.real(np.trace(qh_r @ q)))
    if not with_gradient:
        return value
    d_mat = 1j * scale * np.cos(theta) * (geom.positions[:, None] * a)
    d_proj = d_mat - q @ (q.conj().T @ d_mat)
    core = np.linalg.solve(tri, qh_r @ d_proj)
    grad = -2.0 * np.real(np.diag(core))
    return value, grad


def local_ml_refine(
    R_hat,
    geom: ArrayGeometry,
    theta_coarse,
    delta: float = np.deg2rad(5.0),
):
    """Stage-2 refinement: bounded quasi-Newton descent of the ML objective.

    Searches the per-coordinate box [theta_coarse - delta, + delta]
    (clipped to the open scan range) from the coarse point plus two jittered
    starts and keeps the best.  The returned objective never exceeds the
    objective at the coarse point.  Rank-deficient steering during the
    search is retried with a 1e-6 rad perturbation; if the deficiency
    persists the result is flagged converged=False.
    """
    coarse = np.atleast_1d(np.asarray(theta_coarse, dtype=float))
    if coarse.size == 0:
        raise ValueError("need at least one coarse estimate")
    if np.any(np.abs(coarse) >= np.pi / 2):
        raise ValueError("coarse estimates out of scan range")
    delta = float(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    r = _covariance_matrix(R_hat)
    n_sources = coarse.size
    lo = np.maximum(coarse - delta, -_ANGLE_LIMIT)
    hi = np.minimum(coarse + delta, _ANGLE_LIMIT)
    anchor = np.clip(coarse, lo, hi)
    fallback = float(np.real(np.trace(r)))
    persistent = False

    def safe_objective(theta):
        nonlocal persistent
        ladder = 1e-6 * np.arange(1, n_sources + 1)
        for attempt in (theta, theta + ladder):
            try:
                return ml_objective(attempt, r, geom, with_gradient=True)
            except DegenerateConfigurationError:
                continue
        persistent = True
        return fallback, np.zeros(n_sources)

    rng = np.random.default_rng(193)
    starts = [anchor]
    for _ in range(2):
        jitter = rng.uniform(-delta / 2, delta / 2, size=n_sources)
        starts.append(np.clip(anchor + jitter, lo, hi))

    best_theta, best_value = anchor, safe_objective(anchor)[0]
    iterations = 0
    for start in starts:
        res = minimize(
            safe_objective,
            x0=start,
            jac=True,
            bounds=list(zip(lo, hi)),
            method="L-BFGS-B",
        )
        iterations += int(res.nit)
        if np.isfinite(res.fun) and res.fun < best_value:
            best_theta, best_value = np.clip(res.x, lo, hi), float(res.fun)
    info = {
        "objective": best_value,
        "iterations": iterations,
        "converged": not persistent,
    }
    return np.sort(best_theta), info


def _box_objective_scan(
    cov,
    geom,
    center,
    half_width,
    step=np.deg2rad(0.2),
    n_starts=6,
):
    """Promising start points of the concentrated likelihood on a box grid.

    Evaluates tr{(I - P_A) R_hat} on a per-source lattice of the given step
    (batched QR, no descent) and returns up to n_starts well-separated
    low-objective points, best first.  Returns an empty list when the
    combinatorial grid would be too large to scan.
    """
    r = _covariance_matrix(cov)
    center = np.asarray(center, dtype=float)
    n_axis = 2 * int(np.ceil(half_width / step)) + 1
    if n_axis ** center.size > 200_000:
        return []
    axes = [
        np.clip(np.linspace(c - half_width, c + half_width, n_axis),
                -_ANGLE_LIMIT, _ANGLE_LIMIT)
        for c in center
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    combos = np.stack([m.ravel() for m in mesh], axis=-1)  # (P, L)
    scale = 2.0 * np.pi / geom.wavelength
    phases = scale * geom.positions[None, :, None] * np.sin(combos)[:, None, :]
    steering = np.exp(1j * phases)  # (P, N, L)
    q, _ = np.linalg.qr(steering)
    captured = np.einsum("pni,nm,pmi->p", q.conj(), r, q)
    values = np.real(np.trace(r)) - np.real(captured)
    separation = 4 * step
    starts = []
    for idx in np.argsort(values, kind="stable"):
        point = np.sort(combos[idx])
        if any(np.max(np.abs(point - s)) < separation for s in starts):
            continue
        starts.append(point)
        if len(starts) == n_starts:
            break
    return starts


def fas_music(
    data: SnapshotData,
    geom: ArrayGeometry,
    n_sources: int,
    config: EstimationConfig | None = None,
) -> EstimateResult:
    """Two-stage estimation: coarray disambiguation, then local ML precision.

    When Stage 1 resolves fewer than n_sources peaks (closely spaced sources
    merge in the coarse spectrum), the found peaks are duplicated up to
    n_sources and the Stage-2 box is doubled so the refinement can split
    them.  Stage-2 non-convergence falls back to the coarse estimates with
    converged=False.

    data may also be a precomputed covariance (CovarianceEstimate or square
    matrix); both stages operate on the covariance alone.
    """
    if config is None:
        config = EstimationConfig()
    cov = sample_covariance(data) if isinstance(data, SnapshotData) else data
    stage1 = coarray_music(cov, geom, n_sources, config.grid_step_deg)
    coarse = stage1.theta_hat
    delta = np.deg2rad(config.delta_deg)
    if coarse.size == 0:
        return EstimateResult(
            theta_hat=coarse,
            theta_coarse=coarse,
            spectrum=stage1.spectrum,
            diagnostics={**stage1.diagnostics, "converged": False},
        )

    # Candidate coarse hypotheses for Stage 2.  Besides the literal Stage-1
    # peaks, closely spaced sources may merge into one coarse hump while a
    # sidelobe masquerades as the missing peak, so the strongest peak is
    # also tried duplicated with a doubled box; the final ML objective picks
    # the winner.
    ladder = 1e-3 * np.arange(n_sources)
    candidates = []
    if coarse.size >= n_sources:
        candidates.append((coarse, delta, False))
    else:
        candidates.append(
            (np.sort(np.resize(coarse, n_sources) + ladder), 2 * delta, True)
        )
    if n_sources > 1:
        angles, values = stage1.spectrum
        strongest = float(angles[np.argmax(values)])
        candidates.append(
            (np.sort(strongest + ladder), 2 * delta, True)
        )

    # Grating fringes of very sparse layouts can pull the coarse start into
    # a neighboring likelihood basin whose needle minimum the quasi-Newton
    # descent then polishes.  A dense objective scan over the box surfaces
    # the competing basins, and the final-objective arbitration sees all of
    # them.
    for scan_start in _box_objective_scan(cov, geom, candidates[0][0], delta):
        candidates.append((scan_start + ladder, delta, False))

    best = None
    for start, box, was_rescue in candidates:
        refined, info = local_ml_refine(cov, geom, start, box)
        if best is None or info["objective"] < best[1]["objective"]:
            best = (refined, info, start, was_rescue)
    refined, info, start, rescued = best
    theta_hat = refined if info["converged"] else np.sort(start)
    diagnostics = {
        "contiguous_half_length": stage1.diagnostics["contiguous_half_length"],
        "subarray_size": stage1.diagnostics["subarray_size"],
        "stage1_peaks": int(stage1.theta_hat.size),
        "rescued": rescued,
        "ml_iterations": info["iterations"],
        "ml_objective": info["objective"],
        "converged": bool(info["converged"]),
    }
    return EstimateResult(
        theta_hat=theta_hat,
        theta_coarse=stage1.theta_hat,
        spectrum=stage1.spectrum,
        diagnostics=diagnostics,
    )


def adaptive_fas_music(
    data_source,
    n: int,
    aperture: float,
    n_sources: int,
    k_adapt: int,
    config: EstimationConfig | None = None,
    *,
    wavelength: float = 1.0,
):
    """Alternate position design and estimation against a live data source.

    Starts from uniformly spaced half-wavelength positions (no DOA prior),
    then for each of k_adapt rounds re-designs the positions for the current
    estimates, collects fresh data through the callback, and re-estimates.
    Returns the final result and geometry; rounds whose design is infeasible
    keep the previous geometry and are listed in
    diagnostics["design_fallbacks"].
    """
    n = int(n)
    k_adapt = int(k_adapt)
    if k_adapt < 0:
        raise ValueError("k_adapt must be >= 0")
    if config is None:
        config = EstimationConfig()
    d0 = wavelength / 2.0
    spacing = d0 if (n - 1) * d0 <= aperture else aperture / (n - 1)
    geom = ArrayGeometry(
        positions=np.arange(n) * spacing, wavelength=wavelength, aperture=aperture
    )
    data = data_source(geom)
    result = fas_music(data, geom, n_sources, config)
    fallbacks = []
    for k in range(1, k_adapt + 1):
        new_geom = geom
        estimates = _ascending_distinct(result.theta_hat)
        if estimates.size == n_sources:
            surrogate = SourceScenario(
                doas=estimates,
                powers=np.ones(n_sources),
                noise_power=1.0,
                n_snapshots=data.samples.shape[1],
            )
            try:
                new_geom = design_geometry(
                    surrogate, n, aperture, config.design, wavelength=wavelength
                ).geometry
            except (InfeasibleSpacingError, DegenerateConfigurationError):
                fallbacks.append(k)
        else:
            fallbacks.append(k)
        geom = new_geom
        data = data_source(geom)
        result = fas_music(data, geom, n_sources, config)
    diagnostics = {
        **result.diagnostics,
        "adapt_iterations": k_adapt,
        "design_fallbacks": fallbacks,
    }
    result = EstimateResult(
        theta_hat=result.theta_hat,
        theta_coarse=result.theta_coarse,
        spectrum=result.spectrum,
        diagnostics=diagnostics,
    )
    return result, geom


def _ascending_distinct(theta: np.ndarray, gap: float = 1e-6) -> np.ndarray:
    """Sorted copy with ties nudged apart so scenario validation accepts it."""
    out = np.sort(np.asarray(theta, dtype=float))
    for i in range(1, out.size):
        if out[i] <= out[i - 1] + gap:
            out[i] = out[i - 1] + gap
    return out
