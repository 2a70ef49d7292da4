"""Spectral decomposition of symmetric matrices and everything derived from it.

All quantities flow from one `SpectralDecomposition` per matrix: shifted
inverse singular values mu_k(lambda) with their rank permutation, the
log-weighted star norm, rank correspondence between two shift locations,
local eigenvalue counts and the semicircle density/CDF/quantiles, minimal
singular-value gaps, the projection distance identity, bounded-Lipschitz
distance to the semicircle law, and coordinate delocalization profiles.

Shifts landing within ``1e-14 * (1 + op_norm)`` of an eigenvalue are flagged
*resonant*: `ShiftedSpectrum.mu` then caps the affected entries at a finite
sentinel, and the norm operations refuse to aggregate them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .ensemble import SymmetricMatrix

RESONANCE_RTOL = 1e-14

_BL_GRID_LO = -3.0
_BL_GRID_HI = 3.0


class ResonantShiftError(ValueError):
    """A shift location collided with an eigenvalue (within the resonance
    threshold), so inverse-spectrum aggregates are undefined."""


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues sorted ascending with aligned orthonormal eigenvector
    columns; the single source of truth for all spectrum-derived queries."""

    n: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self) -> None:
        if self.eigenvalues.shape != (self.n,) or self.eigenvectors.shape != (
            self.n,
            self.n,
        ):
            raise ValueError("decomposition shapes inconsistent with n")
        if np.any(np.diff(self.eigenvalues) < 0):
            raise ValueError("eigenvalues must be nondecreasing")


def eig_symmetric(a: SymmetricMatrix | np.ndarray) -> SpectralDecomposition:
    """Full symmetric eigendecomposition (tridiagonalization + implicit-shift
    QR via LAPACK ``syevd``), eigenvalues ascending."""
    dense = a.to_dense() if isinstance(a, SymmetricMatrix) else np.asarray(a, dtype=np.float64)
    if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
        raise ValueError("need a square matrix")
    if not np.all(np.isfinite(dense)):
        raise ValueError("matrix has non-finite entries")
    if not isinstance(a, SymmetricMatrix) and not np.array_equal(dense, dense.T):
        raise ValueError("matrix is not exactly symmetric")
    w, v = np.linalg.eigh(dense)
    return SpectralDecomposition(dense.shape[0], w, v)


def op_norm(dec: SpectralDecomposition) -> float:
    """Operator norm: largest eigenvalue magnitude."""
    return float(np.max(np.abs(dec.eigenvalues)))


@dataclass(frozen=True)
class ShiftedSpectrum:
    """Inverse spectral gaps at a location, ranked.

    ``mu[k]`` is the (k+1)-th largest value of ``1 / |eigenvalue - lam|`` and
    ``eig_index[k]`` is the position (into ``dec.eigenvalues``) of the
    eigenvalue achieving that rank.  Ties in the gap are broken toward the
    lower position, so the ranking is deterministic.  When ``resonant`` is
    set, entries whose gap fell below ``threshold`` are capped at
    ``1/threshold`` instead of overflowing; aggregate norms reject such
    spectra.
    """

    lam: float
    mu: np.ndarray
    eig_index: np.ndarray
    resonant: bool
    threshold: float


def shifted_spectrum(dec: SpectralDecomposition, lam: float) -> ShiftedSpectrum:
    if not math.isfinite(lam):
        raise ValueError("shift location must be finite")
    gaps = np.abs(dec.eigenvalues - lam)
    threshold = RESONANCE_RTOL * (1.0 + op_norm(dec))
    resonant = bool(np.any(gaps < threshold))
    order = np.lexsort((np.arange(dec.n), gaps))
    mu = 1.0 / np.maximum(gaps[order], threshold)
    return ShiftedSpectrum(float(lam), mu, order, resonant, threshold)


def sigma_min_shifted(dec: SpectralDecomposition, lam: float) -> float:
    """Least singular value of A - lam*I, i.e. the smallest spectral gap."""
    return float(np.min(np.abs(dec.eigenvalues - lam)))


def _require_clean(shift: ShiftedSpectrum) -> None:
    if shift.resonant:
        raise ResonantShiftError(
            f"shift {shift.lam} is within {shift.threshold} of an eigenvalue"
        )


def star_norm(shift: ShiftedSpectrum) -> float:
    """sqrt( sum_k mu_k^2 * log2(1+k)^2 ), ranks k starting at 1.

    The base-2 logarithm makes every weight at least 1, so this dominates
    `hs_norm` term by term.
    """
    _require_clean(shift)
    k = np.arange(1, shift.mu.size + 1)
    return float(np.sqrt(np.sum((shift.mu * np.log2(1.0 + k)) ** 2)))


def hs_norm(shift: ShiftedSpectrum) -> float:
    """Hilbert-Schmidt norm of the shifted inverse: sqrt(sum mu_k^2)."""
    _require_clean(shift)
    return float(np.sqrt(np.sum(shift.mu**2)))


def rank_correspondence(
    dec: SpectralDecomposition, lam_i: float, lam_j: float, k: int
) -> int:
    """Where the eigenvector ranked ``k`` (1-based) at location ``lam_i``
    lands in the ranking at ``lam_j``.

    Composing the map with its (lam_j, lam_i) counterpart gives the identity,
    and for fixed locations it is a permutation of 1..n.
    """
    if not 1 <= k <= dec.n:
        raise ValueError(f"rank k={k} out of range 1..{dec.n}")
    si = shifted_spectrum(dec, lam_i)
    sj = shifted_spectrum(dec, lam_j)
    _require_clean(si)
    _require_clean(sj)
    inverse_j = np.empty(dec.n, dtype=np.intp)
    inverse_j[sj.eig_index] = np.arange(dec.n)
    return int(inverse_j[si.eig_index[k - 1]]) + 1


def local_count(dec: SpectralDecomposition, energy: float, eta: float) -> int:
    """Number of normalized eigenvalues (divided by sqrt(n)) in the closed
    window [energy - eta/2, energy + eta/2]."""
    if not eta > 0:
        raise ValueError("window width eta must be positive")
    scaled = dec.eigenvalues / math.sqrt(dec.n)
    half = 0.5 * eta
    return int(np.count_nonzero((scaled >= energy - half) & (scaled <= energy + half)))


def semicircle_density(x) -> float | np.ndarray:
    """Semicircle density (1/2pi) * sqrt(max(4 - x^2, 0))."""
    arr = np.asarray(x, dtype=np.float64)
    out = np.sqrt(np.clip(4.0 - arr**2, 0.0, None)) / (2.0 * math.pi)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def semicircle_cdf(x) -> float | np.ndarray:
    """CDF of the semicircle density, clamped to [0, 1] outside [-2, 2]."""
    arr = np.clip(np.asarray(x, dtype=np.float64), -2.0, 2.0)
    out = 0.5 + arr * np.sqrt(4.0 - arr**2) / (4.0 * math.pi) + np.arcsin(arr / 2.0) / math.pi
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def semicircle_quantile(q) -> float | np.ndarray:
    """Inverse of `semicircle_cdf` on (0, 1), by bisection (the CDF is
    strictly increasing on [-2, 2])."""
    arr = np.atleast_1d(np.asarray(q, dtype=np.float64))
    if np.any((arr <= 0.0) | (arr >= 1.0)):
        raise ValueError("quantile levels must lie strictly inside (0, 1)")
    lo = np.full(arr.shape, -2.0)
    hi = np.full(arr.shape, 2.0)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        below = semicircle_cdf(mid) < arr
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = 0.5 * (lo + hi)
    return float(out[0]) if np.isscalar(q) or np.asarray(q).ndim == 0 else out


def singular_values(dec: SpectralDecomposition) -> np.ndarray:
    """Eigenvalue magnitudes sorted descending."""
    return np.sort(np.abs(dec.eigenvalues))[::-1]


def min_sv_gap(dec: SpectralDecomposition, lo: float, hi: float) -> float:
    """Minimum consecutive difference among singular values inside the closed
    interval [lo, hi] (absolute units); ``inf`` when fewer than two land
    inside."""
    if not lo <= hi:
        raise ValueError("empty interval")
    sv = singular_values(dec)
    inside = sv[(sv >= lo) & (sv <= hi)]
    if inside.size < 2:
        return math.inf
    return float(np.min(-np.diff(inside)))


class DistanceIdentity(NamedTuple):
    distance: float
    resolvent_norm: float


def distance_identity(
    minor: SpectralDecomposition, x: np.ndarray, a11: float, lam: float
) -> DistanceIdentity:
    """Distance from a matrix column to the span of the others, from minor
    spectral data alone.

    With R = (A - lam I)^{-1} for the minor A, returns
    ``|<R x, x> - a11| / sqrt(1 + ||R x||^2)`` together with ``||R x||_2``,
    evaluated through the eigen-expansion of the minor.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (minor.n,):
        raise ValueError("vector length must match the minor dimension")
    shift = shifted_spectrum(minor, lam)
    _require_clean(shift)
    coeffs = minor.eigenvectors.T @ x
    denom = minor.eigenvalues - lam
    inner = float(np.sum(coeffs**2 / denom))
    rnorm = float(np.linalg.norm(coeffs / denom))
    return DistanceIdentity(abs(inner - a11) / math.sqrt(1.0 + rnorm**2), rnorm)


def _semicircle_moment_antiderivative(x: np.ndarray) -> np.ndarray:
    # integral of t*rho_sc(t) dt from -2 to x
    arr = np.clip(x, -2.0, 2.0)
    return -((4.0 - arr**2) ** 1.5) / (6.0 * math.pi)


def _grid(step: float) -> np.ndarray:
    m = int(round((_BL_GRID_HI - _BL_GRID_LO) / step))
    if m < 2 or abs(m * step - (_BL_GRID_HI - _BL_GRID_LO)) > 1e-9:
        raise ValueError("grid step must divide the window [-3, 3]")
    return np.linspace(_BL_GRID_LO, _BL_GRID_HI, m + 1)


def _hat_weights_semicircle(grid: np.ndarray) -> np.ndarray:
    """Mass the semicircle law assigns to each piecewise-linear hat function
    on the grid, in closed form (no quadrature)."""
    cdf = semicircle_cdf(grid)
    mom = _semicircle_moment_antiderivative(grid)
    h = grid[1] - grid[0]
    w = np.zeros_like(grid)
    # rising part on [g_{i-1}, g_i]: (t - g_{i-1})/h
    w[1:] += (mom[1:] - mom[:-1] - grid[:-1] * (cdf[1:] - cdf[:-1])) / h
    # falling part on [g_i, g_{i+1}]: (g_{i+1} - t)/h
    w[:-1] += (grid[1:] * (cdf[1:] - cdf[:-1]) - (mom[1:] - mom[:-1])) / h
    return w


def _hat_weights_atoms(points: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Hat-basis weights of the empirical measure of ``points`` (each atom
    mass 1/len); atoms outside the grid are clamped to its edge."""
    h = grid[1] - grid[0]
    pts = np.clip(np.asarray(points, dtype=np.float64), grid[0], grid[-1])
    pos = np.clip(np.floor((pts - grid[0]) / h).astype(np.intp), 0, grid.size - 2)
    frac = (pts - grid[pos]) / h
    w = np.zeros_like(grid)
    np.add.at(w, pos, (1.0 - frac) / pts.size)
    np.add.at(w, pos + 1, frac / pts.size)
    return w


def _bl_lp(weight_diff: np.ndarray, h: float) -> float:
    """max sum f_i * weight_diff_i over |f_i| <= 1, |f_{i+1} - f_i| <= h."""
    m = weight_diff.size
    ones = np.ones(m - 1)
    rows = np.arange(m - 1)
    step = sparse.coo_matrix(
        (np.concatenate([-ones, ones]), (np.tile(rows, 2), np.concatenate([rows, rows + 1]))),
        shape=(m - 1, m),
    ).tocsr()
    a_ub = sparse.vstack([step, -step])
    b_ub = np.full(2 * (m - 1), h)
    res = linprog(
        -weight_diff, A_ub=a_ub, b_ub=b_ub, bounds=(-1.0, 1.0), method="highs"
    )
    if not res.success:  # pragma: no cover - HiGHS handles this LP class
        raise RuntimeError(f"bounded-Lipschitz LP failed: {res.message}")
    return max(0.0, float(-res.fun))


def bl_distance_to_semicircle(dec: SpectralDecomposition, grid_step: float = 0.01) -> float:
    """Bounded-Lipschitz distance between the normalized empirical spectral
    measure (atoms at eigenvalue/sqrt(n)) and the semicircle law.

    Test functions are discretized to piecewise-linear functions on a uniform
    grid over [-3, 3] with values in [-1, 1] and Lipschitz constant at most 1,
    and the supremum becomes a finite linear program.  The result lower-bounds
    the true distance, with discretization error on the order of the grid
    step.
    """
    grid = _grid(grid_step)
    atoms = dec.eigenvalues / math.sqrt(dec.n)
    diff = _hat_weights_atoms(atoms, grid) - _hat_weights_semicircle(grid)
    return _bl_lp(diff, grid_step)


def bl_distance_between_samples(
    points_a: Sequence[float], points_b: Sequence[float], grid_step: float = 0.01
) -> float:
    """Same discretized distance, between two empirical measures."""
    grid = _grid(grid_step)
    diff = _hat_weights_atoms(np.asarray(points_a), grid) - _hat_weights_atoms(
        np.asarray(points_b), grid
    )
    return _bl_lp(diff, grid_step)


def delocalization_profile(dec: SpectralDecomposition, tau: float) -> np.ndarray:
    """Per-eigenvector fraction of coordinates with |v_j| >= tau / sqrt(n)."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    thresh = tau / math.sqrt(dec.n)
    return np.count_nonzero(np.abs(dec.eigenvectors) >= thresh, axis=0) / dec.n
