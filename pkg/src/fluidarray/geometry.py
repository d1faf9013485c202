"""Array geometries and difference-coarray analysis.

Constructors for the classical sparse-array families (ULA, two-level nested,
extended coprime, minimum-redundancy) plus free-position geometries whose
elements may sit anywhere in a deployment region [0, D].  The difference
coarray of a geometry determines how many sources coarray-based subspace
methods can resolve; ``coarray_dof`` and ``dual_dof_bound`` quantify that.

References
----------
P. Pal and P. P. Vaidyanathan, "Nested arrays: A novel approach to array
processing with enhanced degrees of freedom," IEEE Trans. Signal Process.,
2010.  A. T. Moffet, "Minimum-redundancy linear arrays," IEEE Trans.
Antennas Propag., 1968.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_float_array, check_positive_scalar
from .exceptions import ResourceLimitError, UnsupportedSizeError

__all__ = [
    "ArrayGeometry",
    "DifferenceCoarray",
    "make_ula",
    "make_nested",
    "make_coprime",
    "make_mra",
    "mra_exhaustive_search",
    "difference_coarray",
    "coarray_dof",
    "dual_dof_bound",
    "position_moments",
    "save_geometry",
    "load_geometry",
]

# Restricted minimum-redundancy rulers: every lag 1..aperture is present in
# the difference set.  Entries for N <= 6 are reproduced by
# mra_exhaustive_search (same tie-breaking); larger entries follow the
# classical tables and are re-verified by a coverage test.
_MRA_TABLE = {
    2: (0, 1),
    3: (0, 1, 3),
    4: (0, 1, 4, 6),
    5: (0, 1, 2, 6, 9),
    6: (0, 1, 2, 6, 10, 13),
    7: (0, 1, 8, 11, 13, 15, 17),
    8: (0, 1, 4, 10, 16, 18, 21, 23),
    9: (0, 1, 4, 10, 16, 22, 24, 27, 29),
    10: (0, 1, 3, 6, 13, 20, 27, 31, 35, 36),
}

_SEARCH_MAX_N = 6
_SEARCH_MAX_APERTURE = 30


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    """An ordered set of antenna positions inside a deployment region.

    Parameters
    ----------
    positions : ndarray
        Element positions in meters, ascending, within [0, aperture].
        Coincident positions are allowed (idealized co-located elements).
    wavelength : float
        Carrier wavelength in meters; the Nyquist spacing is d0 = wavelength/2.
    aperture : float
        Length D of the deployment region [0, D].
    """

    positions: np.ndarray
    wavelength: float
    aperture: float

    def __post_init__(self):
        pos = as_float_array(self.positions, "positions").copy()
        if pos.size < 2:
            raise ValueError("geometry needs at least 2 elements")
        if np.any(np.diff(pos) < 0):
            raise ValueError("positions must be ascending")
        wavelength = check_positive_scalar(self.wavelength, "wavelength")
        aperture = check_positive_scalar(self.aperture, "aperture")
        if pos[0] < 0 or pos[-1] > aperture * (1 + 1e-12):
            raise ValueError("positions must lie within [0, aperture]")
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "wavelength", wavelength)
        object.__setattr__(self, "aperture", aperture)

    @property
    def n_sensors(self) -> int:
        return int(self.positions.size)

    @property
    def d0(self) -> float:
        """Nyquist spacing lambda/2."""
        return self.wavelength / 2.0

    def to_dict(self) -> dict:
        return {
            "wavelength": self.wavelength,
            "aperture": self.aperture,
            "positions": [float(p) for p in self.positions],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ArrayGeometry":
        return cls(
            positions=np.asarray(payload["positions"], dtype=float),
            wavelength=float(payload["wavelength"]),
            aperture=float(payload["aperture"]),
        )


@dataclass(frozen=True, eq=False)
class DifferenceCoarray:
    """All pairwise position differences of a geometry.

    Attributes
    ----------
    lags : ndarray
        Unique lag values in meters, sorted, symmetric about 0.
    redundancy : dict
        Maps each lag to the ordered sensor-index pairs (i, j) with
        ``p[i] - p[j]`` equal to that lag (up to the dedup tolerance).
    grid_lags : ndarray of int
        Integers m for lags within ``tol_grid`` of m*d0.
    contiguous_half_length : int
        Largest M_c such that every grid lag -M_c..M_c is present.
    """

    lags: np.ndarray
    redundancy: dict
    grid_lags: np.ndarray
    contiguous_half_length: int
    n_sensors: int
    d0: float
    tol_grid: float
    grid_pairs: dict = field(repr=False, default_factory=dict)

    def multiplicity(self, lag: float) -> int:
        return len(self.redundancy.get(lag, ()))


def make_ula(n: int, d0: float) -> ArrayGeometry:
    """Uniform linear array at {0, d0, ..., (N-1) d0}."""
    n = int(n)
    if n < 2:
        raise ValueError("ULA needs at least 2 elements")
    d0 = check_positive_scalar(d0, "d0")
    positions = d0 * np.arange(n, dtype=float)
    return ArrayGeometry(positions=positions, wavelength=2 * d0, aperture=positions[-1])


def make_nested(n1: int, n2: int, d0: float) -> ArrayGeometry:
    """Two-level nested array.

    Dense level {1..N1} d0, sparse level {(N1+1) m : m = 1..N2} d0; the
    aperture is N2 (N1+1) d0 and the coarray is hole-free with
    2 N2 (N1+1) - 1 contiguous lags (Pal & Vaidyanathan, 2010).
    """
    n1, n2 = int(n1), int(n2)
    if n1 < 1 or n2 < 1:
        raise ValueError("nested array levels must be >= 1")
    d0 = check_positive_scalar(d0, "d0")
    dense = np.arange(1, n1 + 1, dtype=float)
    sparse = (n1 + 1) * np.arange(1, n2 + 1, dtype=float)
    positions = d0 * np.unique(np.concatenate([dense, sparse]))
    return ArrayGeometry(positions=positions, wavelength=2 * d0, aperture=positions[-1])


def make_coprime(m: int, nc: int, d0: float) -> ArrayGeometry:
    """Extended coprime array for a coprime pair (M, Nc).

    Positions {0, M, ..., (Nc-1) M} d0 united with {Nc, ..., (2M-1) Nc} d0.
    Grid spacings are coprime multiples of d0, so the difference set covers a
    long (but holey) range of lags.
    """
    m, nc = int(m), int(nc)
    if m < 2 or nc < 2:
        raise ValueError("coprime factors must be >= 2")
    if math.gcd(m, nc) != 1:
        raise ValueError(f"factors must be coprime, gcd({m},{nc}) != 1")
    d0 = check_positive_scalar(d0, "d0")
    first = m * np.arange(nc, dtype=float)
    second = nc * np.arange(1, 2 * m, dtype=float)
    positions = d0 * np.unique(np.concatenate([first, second]))
    return ArrayGeometry(positions=positions, wavelength=2 * d0, aperture=positions[-1])


def make_mra(n: int, d0: float) -> ArrayGeometry:
    """Minimum-redundancy array from the shipped restricted-ruler table."""
    n = int(n)
    if n not in _MRA_TABLE:
        raise UnsupportedSizeError(
            f"MRA table covers 2 <= N <= {max(_MRA_TABLE)}, got N={n}"
        )
    d0 = check_positive_scalar(d0, "d0")
    positions = d0 * np.asarray(_MRA_TABLE[n], dtype=float)
    return ArrayGeometry(positions=positions, wavelength=2 * d0, aperture=positions[-1])


def _contiguous_from_diffset(diffs: set) -> int:
    m = 0
    while (m + 1) in diffs:
        m += 1
    return m


def mra_exhaustive_search(n: int, max_aperture: int) -> list:
    """Search all integer rulers for the maximal contiguous difference cover.

    Enumerates every ruler {0} ∪ S with S ⊆ {1..max_aperture}, |S| = N-1,
    and returns the one maximizing the contiguous DOF 2 M_c + 1.  Ties go to
    the smallest aperture, then lexicographic order.  Guarded to N <= 6,
    max_aperture <= 30; the problem is NP-hard in general.
    """
    n = int(n)
    max_aperture = int(max_aperture)
    if n < 2:
        raise ValueError("need at least 2 elements")
    if n > _SEARCH_MAX_N or max_aperture > _SEARCH_MAX_APERTURE:
        raise ResourceLimitError(
            f"search limited to N <= {_SEARCH_MAX_N}, "
            f"max_aperture <= {_SEARCH_MAX_APERTURE}"
        )
    best = None  # (-dof, aperture, positions)
    for rest in itertools.combinations(range(1, max_aperture + 1), n - 1):
        ruler = (0,) + rest
        diffs = {a - b for a in ruler for b in ruler}
        dof = 2 * _contiguous_from_diffset(diffs) + 1
        key = (-dof, rest[-1], ruler)
        if best is None or key < best:
            best = key
    return list(best[2])


def difference_coarray(
    geom: ArrayGeometry, tol_grid: float | None = None
) -> DifferenceCoarray:
    """Compute the difference coarray of a geometry.

    Lags closer than ``1e-9 * d0`` are merged (floating-point dedup for exact
    constructions); a lag within ``tol_grid`` (default ``1e-3 * d0``) of an
    integer multiple m*d0 is recorded as the virtual grid element m.
    """
    d0 = geom.d0
    if tol_grid is None:
        tol_grid = 1e-3 * d0
    tol_grid = check_positive_scalar(tol_grid, "tol_grid")
    tol_dedup = 1e-9 * d0
    p = geom.positions
    n = geom.n_sensors

    # Nonnegative side first; the negative side is its exact mirror, which
    # keeps value(-d) == -value(d) and the pair lists swapped.
    zero_pairs = []
    pos_entries = []  # (lag, i, j)
    for i in range(n):
        for j in range(n):
            lag = p[i] - p[j]
            if abs(lag) <= tol_dedup:
                if i >= j:
                    zero_pairs.append((i, j))
                    if i > j:
                        zero_pairs.append((j, i))
            elif lag > 0:
                pos_entries.append((lag, i, j))
    pos_entries.sort(key=lambda e: e[0])

    clusters = []  # (canonical_lag, [(i, j), ...])
    for lag, i, j in pos_entries:
        if clusters and lag - clusters[-1][1][-1][0] <= tol_dedup:
            clusters[-1][1].append((lag, i, j))
        else:
            clusters.append((None, [(lag, i, j)]))
    canonical = []
    for _, members in clusters:
        value = float(np.mean([m[0] for m in members]))
        canonical.append((value, [(i, j) for _, i, j in members]))

    redundancy = {0.0: zero_pairs}
    for value, pairs in canonical:
        redundancy[value] = pairs
        redundancy[-value] = [(j, i) for i, j in pairs]

    grid_pairs = {0: list(zero_pairs)}
    for value, pairs in canonical:
        m = int(round(value / d0))
        if m > 0 and abs(value - m * d0) <= tol_grid:
            grid_pairs.setdefault(m, []).extend(pairs)
            grid_pairs.setdefault(-m, []).extend((j, i) for i, j in pairs)

    grid_set = {m for m in grid_pairs if m > 0}
    m_c = 0
    while (m_c + 1) in grid_set:
        m_c += 1

    lags = np.array(sorted(redundancy), dtype=float)
    lags.flags.writeable = False
    grid_lags = np.array(sorted(grid_pairs), dtype=int)
    grid_lags.flags.writeable = False
    return DifferenceCoarray(
        lags=lags,
        redundancy=redundancy,
        grid_lags=grid_lags,
        contiguous_half_length=m_c,
        n_sensors=n,
        d0=d0,
        tol_grid=tol_grid,
        grid_pairs=grid_pairs,
    )


def coarray_dof(coarray: DifferenceCoarray) -> int:
    """Contiguous degrees of freedom 2 M_c + 1."""
    return 2 * coarray.contiguous_half_length + 1


def dual_dof_bound(n: int, aperture: float, d0: float) -> int:
    """Universal DOF ceiling min(N^2 - N + 1, 2 floor(D/d0) + 1).

    The first term counts distinct differences of N elements; the second is
    the grid capacity of the deployment region.
    """
    n = int(n)
    if n < 2:
        raise ValueError("need at least 2 elements")
    aperture = check_positive_scalar(aperture, "aperture")
    d0 = check_positive_scalar(d0, "d0")
    # 1e-12 guard absorbs representation noise in D/d0 without granting a
    # whole extra grid cell
    grid_cells = math.floor(aperture / d0 + 1e-12)
    return min(n * n - n + 1, 2 * grid_cells + 1)


def position_moments(geom: ArrayGeometry, k_max: int) -> list:
    """Central position moments [mu_2, ..., mu_k_max] about the mean."""
    k_max = int(k_max)
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    centered = geom.positions - geom.positions.mean()
    return [float(np.mean(centered**k)) for k in range(2, k_max + 1)]


def save_geometry(geom: ArrayGeometry, path) -> None:
    """Write geometry JSON: {"wavelength", "aperture", "positions"}."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(geom.to_dict(), fh, indent=2)
        fh.write("\n")


def load_geometry(path) -> ArrayGeometry:
    with open(path, "r", encoding="utf-8") as fh:
        return ArrayGeometry.from_dict(json.load(fh))
