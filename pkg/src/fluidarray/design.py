"""Continuous antenna-position design.

Optimal positions for a fluid-antenna array deployed on [0, D]: a closed-form
endpoint rule for one source, and for several sources a Frank-Wolfe
(conditional-gradient) solver for the D-optimal design measure with a
Kiefer-Wolfowitz optimality certificate, followed by support extraction,
spacing-penalized polish, and a coarray-completeness refinement that trades
log det F against contiguous virtual-array length.

References
----------
J. Kiefer and J. Wolfowitz, "The equivalence of two extremum problems,"
Canad. J. Math., 1960.  M. Frank and P. Wolfe, "An algorithm for quadratic
programming," Naval Res. Logist. Quart., 1956.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import as_float_array, check_positive_scalar
from .exceptions import (
    DegenerateConfigurationError,
    InfeasibleSpacingError,
)
from .fisher import (
    SINGULAR_COND,
    fim_exact,
    fim_measure,
    information_vectors,
)
from .geometry import ArrayGeometry, coarray_dof, difference_coarray
from .signal import SourceScenario

__all__ = [
    "DesignMeasure",
    "DesignConfig",
    "DesignResult",
    "single_source_optimal",
    "frank_wolfe_design",
    "directional_derivative",
    "extract_positions",
    "spacing_penalty",
    "spacing_penalty_gradient",
    "spacing_penalized_objective",
    "coarray_refine",
    "dof_loss_from_spacing",
    "design_geometry",
]


@dataclass(frozen=True, eq=False)
class DesignMeasure:
    """A discrete probability measure over candidate positions in [0, D].

    Parameters
    ----------
    atoms : tuple of (position, weight)
        Support points with nonnegative weights summing to 1.
    kw_gap : float
        Last certified Kiefer-Wolfowitz gap max_p phi(p) - L (inf if never
        certified).
    iterations_used : int
        Frank-Wolfe iterations spent producing the measure.
    aperture, wavelength, n_sensors
        The deployment region length D, carrier wavelength, and target
        element count the measure was designed for.
    """

    atoms: tuple
    kw_gap: float
    iterations_used: int
    aperture: float
    wavelength: float
    n_sensors: int

    def __post_init__(self):
        aperture = check_positive_scalar(self.aperture, "aperture")
        wavelength = check_positive_scalar(self.wavelength, "wavelength")
        n_sensors = int(self.n_sensors)
        if n_sensors < 2:
            raise ValueError("n_sensors must be >= 2")
        atoms = tuple((float(p), float(w)) for p, w in self.atoms)
        if not atoms:
            raise ValueError("measure needs at least one atom")
        weights = np.array([w for _, w in atoms])
        positions = np.array([p for p, _ in atoms])
        if np.any(weights < 0):
            raise ValueError("atom weights must be >= 0")
        if abs(weights.sum() - 1.0) > 1e-10:
            raise ValueError(f"atom weights sum to {weights.sum()}, expected 1")
        if positions.min() < -1e-12 or positions.max() > aperture * (1 + 1e-12):
            raise ValueError("atom positions must lie within [0, aperture]")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "kw_gap", float(self.kw_gap))
        object.__setattr__(self, "iterations_used", int(self.iterations_used))
        object.__setattr__(self, "aperture", aperture)
        object.__setattr__(self, "wavelength", wavelength)
        object.__setattr__(self, "n_sensors", n_sensors)

    @property
    def positions(self) -> np.ndarray:
        return np.array([p for p, _ in self.atoms])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms])

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.positions))


@dataclass(frozen=True)
class DesignConfig:
    """Tuning knobs for the design pipeline.

    Lengths (``d_min``, ``grid_resolution``) are in meters; defaults assume
    the unit carrier wavelength (d0 = 0.5), i.e. d_min = 0.4 d0 and a
    candidate scan step of d0/50.  Use ``for_wavelength`` for other carriers.
    """

    epsilon: float = 1e-3
    t_max: int = 6000
    d_min: float = 0.2
    mu_sp: float = 1e8
    mu_coarray: float = 2.0
    grid_resolution: float = 0.01

    def __post_init__(self):
        check_positive_scalar(self.epsilon, "epsilon")
        check_positive_scalar(self.d_min, "d_min", allow_zero=True)
        check_positive_scalar(self.grid_resolution, "grid_resolution")
        check_positive_scalar(self.mu_sp, "mu_sp", allow_zero=True)
        check_positive_scalar(self.mu_coarray, "mu_coarray", allow_zero=True)
        if int(self.t_max) < 1:
            raise ValueError("t_max must be >= 1")

    @classmethod
    def for_wavelength(cls, wavelength: float, **overrides) -> "DesignConfig":
        d0 = check_positive_scalar(wavelength, "wavelength") / 2.0
        values = dict(d_min=0.4 * d0, grid_resolution=d0 / 50.0)
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True, eq=False)
class DesignResult:
    """Output of the full design pipeline: final geometry + the measure."""

    geometry: ArrayGeometry
    measure: DesignMeasure


def single_source_optimal(n: int, aperture: float) -> np.ndarray:
    """Positions maximizing single-source information on [0, D].

    Even N splits N/2 elements onto each endpoint; odd N places (N-1)/2 on
    each endpoint and one element at the midpoint.
    """
    n = int(n)
    if n < 2:
        raise ValueError("need at least 2 elements")
    aperture = check_positive_scalar(aperture, "aperture")
    half = n // 2
    positions = [0.0] * half + [aperture] * half
    if n % 2:
        positions.insert(half, aperture / 2.0)
    return np.array(positions)


def _inverse_or_raise(F: np.ndarray) -> np.ndarray:
    eigvals = np.linalg.eigvalsh(F)
    if eigvals[-1] <= 0 or eigvals[0] <= eigvals[-1] / SINGULAR_COND:
        raise DegenerateConfigurationError(
            "design-measure information matrix is singular"
        )
    return np.linalg.inv(F)


def _measure_fim_arrays(pos, w, scenario, wavelength, n_sensors):
    center = float(np.dot(w, pos) / np.sum(w))
    h = information_vectors(pos, center, scenario, wavelength, n_sensors)
    F = np.real((h.T * w) @ h.conj())
    return 0.5 * (F + F.T), center


def directional_derivative(measure: DesignMeasure, p: float, scenario) -> float:
    """phi(p) = h(p)^H F(xi)^-1 h(p), the Kiefer-Wolfowitz test function.

    At a D-optimal measure sup_p phi(p) = L; the trace identity
    E_xi[phi] = L holds for any measure with nonsingular F.
    """
    F_inv = _inverse_or_raise(fim_measure(measure, scenario).matrix)
    h = information_vectors(
        [float(p)], measure.mean, scenario, measure.wavelength, measure.n_sensors
    )[0]
    return float(np.real(h.conj() @ F_inv @ h))


def frank_wolfe_design(
    scenario: SourceScenario,
    n: int,
    aperture: float,
    config: DesignConfig | None = None,
    *,
    wavelength: float = 1.0,
    trace_log: list | None = None,
) -> DesignMeasure:
    """D-optimal design measure over [0, D] by Frank-Wolfe iterations.

    Each step moves mass gamma_t = 2/(t+2) onto the position maximizing the
    test function phi, found by a dense candidate scan plus local quadratic
    refinement.  Terminates once phi(p*) <= L + epsilon (Kiefer-Wolfowitz
    certificate) or at t_max; ``kw_gap`` records max phi - L re-measured on a
    10x finer grid.  Deterministic: no randomness enters the iteration.
    """
    n = int(n)
    if n < 2:
        raise ValueError("need at least 2 elements")
    aperture = check_positive_scalar(aperture, "aperture")
    if config is None:
        config = DesignConfig.for_wavelength(wavelength)
    n_l = scenario.n_sources
    n_grid = max(int(round(aperture / config.grid_resolution)), 8)
    grid = np.linspace(0.0, aperture, n_grid + 1)
    step = grid[1] - grid[0]
    merge_tol = wavelength / 200.0  # d0/100

    def phi_at(points, center, F_inv):
        h = information_vectors(points, center, scenario, wavelength, n)
        return np.real(np.einsum("kl,lm,km->k", h.conj(), F_inv, h))

    pos = np.linspace(0.0, aperture, 64)
    w = np.full(64, 1.0 / 64)
    F, center = _measure_fim_arrays(pos, w, scenario, wavelength, n)
    try:
        F_inv = _inverse_or_raise(F)
    except DegenerateConfigurationError:
        # endpoint-plus-uniform reseed before giving up
        pos = np.concatenate([[0.0, aperture], np.linspace(0.0, aperture, 62)])
        w = np.concatenate([[0.125, 0.125], np.full(62, 0.75 / 62)])
        F, center = _measure_fim_arrays(pos, w, scenario, wavelength, n)
        F_inv = _inverse_or_raise(F)

    iterations_used = 0
    for t in range(1, int(config.t_max) + 1):
        phi_grid = phi_at(grid, center, F_inv)
        k = int(np.argmax(phi_grid))
        p_star, phi_star = float(grid[k]), float(phi_grid[k])
        if 0 < k < n_grid:
            denom = phi_grid[k - 1] - 2 * phi_grid[k] + phi_grid[k + 1]
            if denom < 0:
                offset = 0.5 * step * (phi_grid[k - 1] - phi_grid[k + 1]) / denom
                p_try = float(np.clip(grid[k] + offset, 0.0, aperture))
                phi_try = float(phi_at([p_try], center, F_inv)[0])
                if phi_try > phi_star:
                    p_star, phi_star = p_try, phi_try
        if trace_log is not None:
            phi_atoms = phi_at(pos, center, F_inv)
            trace_log.append(
                {
                    "iteration": t - 1,
                    "phi_star": phi_star,
                    "gap": phi_star - n_l,
                    "integral_phi": float(np.dot(w, phi_atoms)),
                    "weight_sum": float(w.sum()),
                    "min_weight": float(w.min()),
                    "n_atoms": int(pos.size),
                }
            )
        if phi_star <= n_l + config.epsilon:
            iterations_used = t - 1
            break
        gamma = 2.0 / (t + 2.0)
        w = w * (1.0 - gamma)
        near = np.nonzero(np.abs(pos - p_star) <= merge_tol)[0]
        if near.size:
            w[near[0]] += gamma
        else:
            pos = np.append(pos, p_star)
            w = np.append(w, gamma)
        keep = w >= 1e-6
        pos, w = pos[keep], w[keep]
        w = w / w.sum()
        F, center = _measure_fim_arrays(pos, w, scenario, wavelength, n)
        F_inv = _inverse_or_raise(F)
        iterations_used = t

    fine = np.linspace(0.0, aperture, 10 * n_grid + 1)
    kw_gap = float(np.max(phi_at(fine, center, F_inv)) - n_l)
    order = np.argsort(pos)
    return DesignMeasure(
        atoms=tuple(zip(pos[order], w[order])),
        kw_gap=kw_gap,
        iterations_used=iterations_used,
        aperture=aperture,
        wavelength=wavelength,
        n_sensors=n,
    )


def _enforce_spacing(positions: np.ndarray, d_min: float, aperture: float):
    """Forward/backward sweeps pushing sorted positions to >= d_min spacing."""
    x = np.sort(positions).astype(float)
    for i in range(1, x.size):
        x[i] = max(x[i], x[i - 1] + d_min)
    if x[-1] > aperture:
        x[-1] = aperture
        for i in range(x.size - 2, -1, -1):
            x[i] = min(x[i], x[i + 1] - d_min)
    return np.clip(x, 0.0, aperture)


def extract_positions(measure: DesignMeasure, n: int, d_min: float) -> np.ndarray:
    """Round a design measure to N concrete positions with d_min spacing.

    Atoms closer than d0/10 merge into weight-averaged clusters; cluster
    multiplicities come from largest-remainder rounding of weight * N; each
    cluster spreads its elements symmetrically at pitch d_min about its
    center, shifted to stay inside [0, D]; final sweeps repair any
    cross-cluster crowding.
    """
    n = int(n)
    if n < 2:
        raise ValueError("need at least 2 elements")
    d_min = check_positive_scalar(d_min, "d_min", allow_zero=True)
    aperture = measure.aperture
    if n * d_min > aperture:
        raise InfeasibleSpacingError(
            f"{n} elements at spacing {d_min} do not fit in [0, {aperture}]"
        )
    merge_tol = measure.wavelength / 20.0  # d0/10
    order = np.argsort(measure.positions)
    pos, w = measure.positions[order], measure.weights[order]

    clusters = []  # (center, weight)
    run_p, run_w = [pos[0]], [w[0]]
    for p, weight in zip(pos[1:], w[1:]):
        if p - run_p[-1] < merge_tol:
            run_p.append(p)
            run_w.append(weight)
        else:
            total = np.sum(run_w)
            clusters.append((float(np.dot(run_p, run_w) / total), float(total)))
            run_p, run_w = [p], [weight]
    total = np.sum(run_w)
    clusters.append((float(np.dot(run_p, run_w) / total), float(total)))

    quotas = np.array([c[1] for c in clusters]) * n
    counts = np.floor(quotas).astype(int)
    remainders = quotas - counts
    for idx in np.argsort(-remainders, kind="stable")[: n - counts.sum()]:
        counts[idx] += 1

    out = []
    for (center, _), m in zip(clusters, counts):
        if m == 0:
            continue
        offsets = (np.arange(m) - (m - 1) / 2.0) * d_min
        spread = center + offsets
        if spread[0] < 0:
            spread = spread - spread[0]
        elif spread[-1] > aperture:
            spread = spread - (spread[-1] - aperture)
        out.extend(spread)
    return _enforce_spacing(np.array(out), d_min, aperture)


def spacing_penalty(positions, d_min: float) -> float:
    """Sum over pairs of max(0, d_min - |p_i - p_j|)^2."""
    p = as_float_array(positions, "positions")
    diffs = np.abs(p[:, None] - p[None, :])
    shortfall = np.maximum(0.0, d_min - diffs[np.triu_indices(p.size, k=1)])
    return float(np.sum(shortfall**2))


def spacing_penalty_gradient(positions, d_min: float) -> np.ndarray:
    """Analytic gradient of ``spacing_penalty`` (subgradient 0 at ties)."""
    p = as_float_array(positions, "positions")
    delta = p[:, None] - p[None, :]
    shortfall = np.maximum(0.0, d_min - np.abs(delta))
    np.fill_diagonal(shortfall, 0.0)
    contrib = -2.0 * shortfall * np.sign(delta)
    return contrib.sum(axis=1)


def spacing_penalized_objective(
    positions,
    scenario: SourceScenario,
    d_min: float,
    mu_sp: float,
    *,
    wavelength: float = 1.0,
    aperture: float | None = None,
) -> float:
    """log det fim_exact minus mu_sp times the spacing penalty."""
    p = np.sort(as_float_array(positions, "positions"))
    if aperture is None:
        aperture = float(p[-1]) if p[-1] > 0 else 1.0
    geom = ArrayGeometry(positions=p, wavelength=wavelength, aperture=aperture)
    sign, logdet = np.linalg.slogdet(fim_exact(geom, scenario).matrix)
    if sign <= 0:
        return -np.inf
    return float(logdet - mu_sp * spacing_penalty(p, d_min))


def _refine_objective(positions, scenario, mu_coarray, wavelength, aperture):
    geom = ArrayGeometry(
        positions=positions, wavelength=wavelength, aperture=aperture
    )
    dof = coarray_dof(difference_coarray(geom))
    if mu_coarray == 0:
        return float(dof), dof
    try:
        sign, logdet = np.linalg.slogdet(fim_exact(geom, scenario).matrix)
    except DegenerateConfigurationError:
        return -np.inf, dof
    if sign <= 0:
        return -np.inf, dof
    return float(dof + mu_coarray * logdet), dof


def coarray_refine(
    positions,
    scenario: SourceScenario,
    mu_coarray: float,
    d_min: float,
    *,
    wavelength: float = 1.0,
    aperture: float | None = None,
    max_rounds: int = 60,
) -> np.ndarray:
    """Greedy coordinate search on |D_cont| + mu log det F.

    Candidate moves per element: every d0-grid point in [0, D] plus small
    off-grid perturbations of the current position.  A move is accepted only
    if it strictly improves the objective, keeps the contiguous DOF at or
    above the input's, and honors the d_min spacing, so the output never
    trades away coarray length and the objective is non-decreasing.
    """
    pos = np.sort(as_float_array(positions, "positions"))
    mu_coarray = check_positive_scalar(mu_coarray, "mu_coarray", allow_zero=True)
    d_min = check_positive_scalar(d_min, "d_min", allow_zero=True)
    d0 = wavelength / 2.0
    if aperture is None:
        aperture = float(pos[-1])
    value, input_dof = _refine_objective(
        pos, scenario, mu_coarray, wavelength, aperture
    )
    grid = d0 * np.arange(int(np.floor(aperture / d0 + 1e-12)) + 1)
    jitters = np.array([-1.0, -0.2, -0.05, 0.05, 0.2, 1.0]) * d0

    for _ in range(max_rounds):
        improved = False
        for i in range(pos.size):
            candidates = np.concatenate([grid, pos[i] + jitters])
            candidates = candidates[
                (candidates >= 0.0) & (candidates <= aperture)
            ]
            best_value, best_trial = value, None
            for c in candidates:
                if abs(c - pos[i]) < 1e-12:
                    continue
                trial = pos.copy()
                trial[i] = c
                trial.sort()
                if d_min > 0 and np.min(np.diff(trial)) < d_min - 1e-12:
                    continue
                trial_value, trial_dof = _refine_objective(
                    trial, scenario, mu_coarray, wavelength, aperture
                )
                if trial_dof >= input_dof and trial_value > best_value + 1e-9:
                    best_value, best_trial = trial_value, trial
            if best_trial is not None:
                pos, value = best_trial, best_value
                improved = True
        if not improved:
            break
    return pos


def dof_loss_from_spacing(
    n: int,
    aperture: float,
    d_min: float,
    *,
    wavelength: float = 1.0,
    n_seeds: int = 8,
) -> int:
    """Contiguous-DOF loss caused by a minimum-spacing constraint.

    Runs the coarray-completeness search (``coarray_refine`` with
    mu_coarray=0) from ``n_seeds`` shared grid-aligned random starts, once
    unconstrained and once honoring d_min, and returns the difference of the
    best DOFs found.  If N elements cannot fit at d_min, the constrained
    search uses the largest count that does (floor(D/d_min) + 1).
    """
    n = int(n)
    aperture = check_positive_scalar(aperture, "aperture")
    d_min = check_positive_scalar(d_min, "d_min", allow_zero=True)
    d0 = wavelength / 2.0
    # fim is never evaluated at mu_coarray=0; any valid scenario works
    dummy = SourceScenario(
        doas=np.array([0.0]), powers=np.array([1.0]),
        noise_power=1.0, n_snapshots=1,
    )
    n_constrained = n
    if d_min > 0 and n * d_min > aperture:
        n_constrained = max(int(np.floor(aperture / d_min)) + 1, 2)
    grid = d0 * np.arange(int(np.floor(aperture / d0 + 1e-12)) + 1)

    def best_dof(n_el, spacing):
        best = 1
        for seed in range(int(n_seeds)):
            rng = np.random.default_rng(seed)
            start = np.sort(rng.choice(grid, size=n_el, replace=False))
            if spacing > 0 and np.min(np.diff(start)) < spacing:
                start = np.linspace(0.0, aperture, n_el)
            refined = coarray_refine(
                start, dummy, 0.0, spacing,
                wavelength=wavelength, aperture=aperture,
            )
            geom = ArrayGeometry(
                positions=refined, wavelength=wavelength, aperture=aperture
            )
            best = max(best, coarray_dof(difference_coarray(geom)))
        return best

    unconstrained = best_dof(n, 0.0)
    constrained = best_dof(n_constrained, d_min)
    return int(unconstrained - constrained)


def design_geometry(
    scenario: SourceScenario,
    n: int,
    aperture: float,
    config: DesignConfig | None = None,
    *,
    wavelength: float = 1.0,
) -> DesignResult:
    """Full position-design pipeline for a source scenario.

    Frank-Wolfe design measure -> support extraction -> spacing-penalized
    quasi-Newton polish -> coarray refinement.  The result is a concrete
    geometry honoring d_min whose coarray supports two-stage estimation.
    """
    from scipy.optimize import minimize

    if config is None:
        config = DesignConfig.for_wavelength(wavelength)
    measure = frank_wolfe_design(
        scenario, n, aperture, config, wavelength=wavelength
    )
    positions = extract_positions(measure, n, config.d_min)

    def negated(x):
        value = spacing_penalized_objective(
            x, scenario, config.d_min, config.mu_sp,
            wavelength=wavelength, aperture=aperture,
        )
        return 1e12 if not np.isfinite(value) else -value

    res = minimize(
        negated,
        x0=positions,
        bounds=[(0.0, aperture)] * n,
        method="L-BFGS-B",
        options={"maxiter": 60},
    )
    if np.isfinite(res.fun) and -res.fun > -negated(positions):
        positions = np.sort(res.x)
    positions = _enforce_spacing(positions, config.d_min, aperture)

    refined = coarray_refine(
        positions, scenario, config.mu_coarray, config.d_min,
        wavelength=wavelength, aperture=aperture,
    )
    geometry = ArrayGeometry(
        positions=refined, wavelength=wavelength, aperture=aperture
    )
    return DesignResult(geometry=geometry, measure=measure)
