"""Structure-of-vectors toolkit: torus norm, the essential LCD family
(single vector, pair combinations over a coordinate subset, subset-minimized,
and weighted tuples), sparse-approximation distance, the sine of the angle
between vectors, an empirical Levy concentration function, and the Monte
Carlo threshold function for the zeroed-out matrix.

LCD searches are certified grid scans: the multiplier axis is scanned at a
declared resolution, the earliest satisfied grid interval is refined by
bisection, and the returned witness re-verifies the defining inequality.  The
search caps (`phi_max`, `theta_max`) replace the exponential caps of the
underlying theory and are recorded in every result, as is the resolution.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ensemble import ZeroedSpec, sample_sparse_block, zeroed_pair_image
from .rng import RngHandle
from .stats import wilson_interval

_SCAN_BLOCK_ELEMENTS = 4_000_000

TAU_GRID = np.logspace(-4.0, 0.0, 64)


def torus_norm(v: np.ndarray) -> float:
    """Distance from v to the nearest integer vector; coordinatewise rounding
    attains the minimum exactly."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("torus norm needs finite entries")
    return float(np.linalg.norm(v - np.round(v)))


def log_plus(x: float) -> float:
    """max(log x, 0), with log_plus(0) = 0."""
    return math.log(x) if x > 1.0 else 0.0


@dataclass(frozen=True)
class LcdQuery:
    """Parameters of an essential-LCD search: the admissibility pair
    (alpha, gamma), the multiplier cap, and the scan granularity."""

    alpha: float
    gamma: float
    phi_max: float
    resolution: float
    refine_iters: int = 48

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not self.phi_max > 0.0:
            raise ValueError("phi_max must be positive")
        if not 0.0 < self.resolution <= self.phi_max / 100.0:
            raise ValueError("resolution must be positive and at most phi_max/100")
        if self.refine_iters < 0:
            raise ValueError("refine_iters must be nonnegative")


@dataclass(frozen=True)
class LcdResult:
    """Outcome of an LCD search.

    ``value`` is the refined earliest multiplier when ``satisfied``, else the
    search cap as a sentinel.  ``witness`` re-verifies the defining inequality
    (scalar multiplier, or a mapping for the multi-parameter searches);
    ``condition_at_witness`` stores the inequality sides there (torus norm
    followed by the bound terms).
    """

    value: float
    witness: float | dict | None
    satisfied: bool
    condition_at_witness: tuple[float, ...]
    resolution: float


def _phi_grid(q: LcdQuery) -> np.ndarray:
    steps = int(math.floor(q.phi_max / q.resolution + 1e-9))
    grid = np.arange(1, steps + 1) * q.resolution
    if grid.size == 0 or grid[-1] < q.phi_max - 1e-12 * q.phi_max:
        grid = np.append(grid, q.phi_max)
    return grid


def _first_hits(
    directions: np.ndarray, q: LcdQuery, stop_at_first: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Earliest scan-grid index at which each unit direction satisfies the
    LCD condition (-1 when never below the cap).

    With ``stop_at_first`` the scan aborts after the first block containing
    any hit — enough to locate the minimum over directions.
    """
    m, n = directions.shape
    grid = _phi_grid(q)
    cap = math.sqrt(q.alpha * n)
    first = np.full(m, -1, dtype=np.intp)
    pending = np.arange(m)
    block = max(1, _SCAN_BLOCK_ELEMENTS // max(1, m * n))
    for start in range(0, grid.size, block):
        phis = grid[start : start + block]
        phase = phis[:, None, None] * directions[None, pending, :]
        tn = np.linalg.norm(phase - np.round(phase), axis=-1)
        ok = tn <= np.minimum(q.gamma * phis[:, None], cap)
        if np.any(ok):
            hit_rows = np.where(ok.any(axis=0), ok.argmax(axis=0), grid.size)
            hit_cols = np.flatnonzero(hit_rows < grid.size)
            first[pending[hit_cols]] = start + hit_rows[hit_cols]
            if stop_at_first:
                return first, grid
            pending = pending[hit_rows == grid.size]
            if pending.size == 0:
                return first, grid
    return first, grid


def _bisect_batch(
    directions: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    q: LcdQuery,
) -> np.ndarray:
    """Shrink [lo, hi] per direction toward the earliest satisfying
    multiplier; hi stays satisfied throughout, so hi is returned."""
    cap = math.sqrt(q.alpha * directions.shape[1])
    lo = lo.copy()
    hi = hi.copy()
    for _ in range(q.refine_iters):
        mid = 0.5 * (lo + hi)
        phase = mid[:, None] * directions
        tn = np.linalg.norm(phase - np.round(phase), axis=-1)
        ok = tn <= np.minimum(q.gamma * mid, cap)
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    return hi


def _condition_terms(v: np.ndarray, phi: float, q: LcdQuery) -> tuple[float, float, float]:
    return (
        torus_norm(phi * v),
        q.gamma * phi * float(np.linalg.norm(v)),
        math.sqrt(q.alpha * v.size),
    )


def _require_unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise ValueError("lcd is defined for unit vectors; normalize the input")
    return v


def lcd(v: np.ndarray, q: LcdQuery) -> LcdResult:
    """Essential LCD of a unit vector: the earliest multiplier phi in
    (0, phi_max] with ||phi*v||_T <= min(gamma*phi, sqrt(alpha*n)), located by
    scan plus bisection; cap sentinel when no multiplier qualifies."""
    v = _require_unit(v)
    values = lcd_batch(v[None, :], q)
    if np.isnan(values[0]):
        return LcdResult(q.phi_max, None, False, _condition_terms(v, q.phi_max, q), q.resolution)
    phi = float(values[0])
    return LcdResult(phi, phi, True, _condition_terms(v, phi, q), q.resolution)


def lcd_batch(directions: np.ndarray, q: LcdQuery) -> np.ndarray:
    """Refined LCD values for a batch of unit row vectors; NaN where the
    condition is never met below the cap.  One shared scan plus one batched
    bisection — the workhorse behind per-eigenvector LCD profiles."""
    directions = np.asarray(directions, dtype=np.float64)
    norms = np.linalg.norm(directions, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-10):
        raise ValueError("lcd is defined for unit vectors; normalize the input")
    first, grid = _first_hits(directions, q, stop_at_first=False)
    out = np.full(directions.shape[0], np.nan)
    found = np.flatnonzero(first >= 0)
    if found.size == 0:
        return out
    hi = grid[first[found]]
    lo = np.where(first[found] > 0, grid[np.maximum(first[found] - 1, 0)], 0.0)
    out[found] = _bisect_batch(directions[found], lo, hi, q)
    return out


def lcd_pair_combination(
    v: np.ndarray,
    w: np.ndarray,
    subset: Sequence[int],
    q: LcdQuery,
    theta_max: float,
    n_angles: int = 720,
) -> LcdResult:
    """Minimal LCD over normalized combinations theta1*v + theta2*w restricted
    to a coordinate subset.

    The normalized combination depends only on the direction of theta, so the
    search runs over angles in [0, pi); an angle is admissible when some theta
    along it has combination norm in [1, 2] within the cap ``theta_max``,
    i.e. when the unit-theta combination norm is at least ``1/theta_max``.
    Returns the cap sentinel when no angle is admissible or none satisfies.
    """
    subset = np.asarray(sorted(set(int(i) for i in subset)), dtype=np.intp)
    if subset.size == 0:
        raise ValueError("coordinate subset must be nonempty")
    if not theta_max > 0:
        raise ValueError("theta_max must be positive")
    vs = np.asarray(v, dtype=np.float64)[subset]
    ws = np.asarray(w, dtype=np.float64)[subset]
    angles = np.linspace(0.0, math.pi, n_angles, endpoint=False)
    combos = np.cos(angles)[:, None] * vs[None, :] + np.sin(angles)[:, None] * ws[None, :]
    norms = np.linalg.norm(combos, axis=1)
    admissible = norms * theta_max >= 1.0
    sentinel = LcdResult(
        q.phi_max, None, False, _condition_terms(vs, q.phi_max, q), q.resolution
    )
    if not np.any(admissible):
        return sentinel
    angles = angles[admissible]
    norms = norms[admissible]
    directions = combos[admissible] / norms[:, None]
    first, grid = _first_hits(directions, q, stop_at_first=True)
    if np.all(first < 0):
        return sentinel
    best_idx = int(np.min(first[first >= 0]))
    contenders = np.flatnonzero(first == best_idx)
    hi = np.full(contenders.size, grid[best_idx])
    lo = np.full(contenders.size, grid[best_idx - 1] if best_idx > 0 else 0.0)
    refined = _bisect_batch(directions[contenders], lo, hi, q)
    pick = int(np.argmin(refined))
    row = contenders[pick]
    phi = float(refined[pick])
    a = angles[row]
    scale = 1.0 / norms[row]
    witness = {
        "phi": phi,
        "theta": (scale * math.cos(a), scale * math.sin(a)),
    }
    return LcdResult(
        phi, witness, True, _condition_terms(directions[row], phi, q), q.resolution
    )


@dataclass(frozen=True)
class SubvectorLcd:
    """Minimum of the pair-combination LCD over coordinate subsets of size at
    least ceil((1-2*mu)*n).  ``exact`` distinguishes full enumeration from the
    sampled mode, whose value is only a one-sided upper estimate."""

    value: float
    satisfied: bool
    exact: bool
    subsets_examined: int
    witness_subset: tuple[int, ...] | None


def subvector_lcd(
    v: np.ndarray,
    w: np.ndarray,
    mu: float,
    q: LcdQuery,
    theta_max: float,
    mode: str = "exact",
    n_angles: int = 180,
    sample_count: int = 200,
    rng: RngHandle | None = None,
) -> SubvectorLcd:
    """Subset-minimized pair LCD: min over I with |I| >= ceil((1-2*mu)*n).

    Exact mode enumerates every admissible subset (all sizes from the floor up
    to n) and is refused for n > 16; sampled mode draws ``sample_count``
    random admissible subsets and reports an upper estimate, flagged by
    ``exact=False``.
    """
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if v.shape != w.shape or v.ndim != 1:
        raise ValueError("v and w must be vectors of equal length")
    n = v.size
    if not 0.0 < mu < 0.5:
        raise ValueError("mu must lie in (0, 1/2)")
    min_size = max(1, math.ceil((1.0 - 2.0 * mu) * n))
    if mode == "exact":
        if n > 16:
            raise ValueError("exact subset enumeration is limited to n <= 16")
        subsets = (
            comb
            for size in range(min_size, n + 1)
            for comb in itertools.combinations(range(n), size)
        )
    elif mode == "sampled":
        if rng is None:
            raise ValueError("sampled mode needs an RngHandle")
        g = rng.generator
        def _draw():
            for _ in range(sample_count):
                size = int(g.integers(min_size, n + 1))
                yield tuple(sorted(g.permutation(n)[:size].tolist()))
        subsets = _draw()
    else:
        raise ValueError(f"unknown mode {mode!r}")
    best = math.inf
    best_subset: tuple[int, ...] | None = None
    any_satisfied = False
    examined = 0
    for subset in subsets:
        examined += 1
        res = lcd_pair_combination(v, w, subset, q, theta_max, n_angles=n_angles)
        if res.satisfied:
            any_satisfied = True
            if res.value < best:
                best = res.value
                best_subset = tuple(subset)
        elif not any_satisfied and q.phi_max < best:
            best = q.phi_max
    if not any_satisfied:
        return SubvectorLcd(q.phi_max, False, mode == "exact", examined, None)
    return SubvectorLcd(best, True, mode == "exact", examined, best_subset)


@dataclass(frozen=True)
class TupleLcdQuery:
    """Parameters of the weighted tuple-LCD search: the level L, the scale
    alpha0, per-vector weights t, the coefficient cap, and scan resolution."""

    big_l: float
    alpha0: float
    t: tuple[float, ...]
    theta_max: float
    resolution: float
    refine_iters: int = 48
    n_angles: int = 360

    def __post_init__(self) -> None:
        if not self.big_l >= 1.0:
            raise ValueError("big_l must be at least 1")
        if not 0.0 < self.alpha0 < 1.0:
            raise ValueError("alpha0 must lie in (0, 1)")
        t = tuple(float(x) for x in self.t)
        if not t or any(x <= 0 for x in t):
            raise ValueError("weights t must be positive")
        object.__setattr__(self, "t", t)
        if not self.theta_max > 0:
            raise ValueError("theta_max must be positive")
        if not 0.0 < self.resolution <= self.theta_max / 100.0:
            raise ValueError("resolution must be positive and at most theta_max/100")
        if self.refine_iters < 0 or self.n_angles < 1:
            raise ValueError("refine_iters and n_angles must be positive")


def _tuple_rhs(radii, coef_norms, q: TupleLcdQuery):
    arg = q.alpha0 * radii * coef_norms / q.big_l
    return q.big_l * np.sqrt(np.log(np.maximum(arg, 1.0)))


def tuple_lcd(ys: Sequence[np.ndarray], q: TupleLcdQuery) -> LcdResult:
    """LCD of a weighted vector tuple: the smallest coefficient norm ||theta||
    with ||sum theta_i Y_i||_T <= L * sqrt(log_+(alpha0*sqrt(sum theta_i^2/t_i^2)/L)).

    Exact scan supports one or two vectors: directions are sampled on the
    half-circle (the condition is symmetric under global sign), radii scanned
    outward shell by shell, and the first satisfied shell refined radially.
    """
    vecs = [np.asarray(y, dtype=np.float64) for y in ys]
    if len(vecs) not in (1, 2):
        raise ValueError("exact tuple scan supports one or two vectors")
    if len(vecs) != len(q.t):
        raise ValueError("weights t must match the number of vectors")
    if len({v.shape for v in vecs}) != 1 or vecs[0].ndim != 1:
        raise ValueError("tuple vectors must share one dimension")
    if len(vecs) == 1:
        coefs = np.array([[1.0]])
    else:
        angles = np.linspace(0.0, math.pi, q.n_angles, endpoint=False)
        coefs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    basis = np.stack(vecs, axis=0)
    directions = coefs @ basis
    coef_norms = np.linalg.norm(coefs / np.asarray(q.t)[None, :], axis=1)
    steps = int(math.floor(q.theta_max / q.resolution + 1e-9))
    radii = np.arange(1, steps + 1) * q.resolution
    if radii.size == 0 or radii[-1] < q.theta_max - 1e-12 * q.theta_max:
        radii = np.append(radii, q.theta_max)
    m, dim = directions.shape
    block = max(1, _SCAN_BLOCK_ELEMENTS // max(1, m * dim))
    hit = None
    for start in range(0, radii.size, block):
        rs = radii[start : start + block]
        phase = rs[:, None, None] * directions[None, :, :]
        tn = np.linalg.norm(phase - np.round(phase), axis=-1)
        ok = tn <= _tuple_rhs(rs[:, None], coef_norms[None, :], q)
        if np.any(ok):
            shell_rows = np.where(ok.any(axis=1), np.arange(rs.size), rs.size)
            first_shell = int(np.min(shell_rows))
            hit = (start + first_shell, np.flatnonzero(ok[first_shell]))
            break
    sentinel_terms = (float("nan"), float("nan"))
    if hit is None:
        return LcdResult(q.theta_max, None, False, sentinel_terms, q.resolution)
    shell_idx, cols = hit
    lo = radii[shell_idx - 1] if shell_idx > 0 else 0.0
    hi0 = radii[shell_idx]
    best_r = math.inf
    best_col = cols[0]
    for col in cols:
        u = directions[col]
        cn = coef_norms[col]
        lo_c, hi_c = lo, hi0
        for _ in range(q.refine_iters):
            mid = 0.5 * (lo_c + hi_c)
            phase = mid * u
            tn = float(np.linalg.norm(phase - np.round(phase)))
            if tn <= float(_tuple_rhs(np.array(mid), np.array(cn), q)):
                hi_c = mid
            else:
                lo_c = mid
        if hi_c < best_r:
            best_r = hi_c
            best_col = col
    theta = tuple(float(best_r * c) for c in coefs[best_col])
    tn = float(
        np.linalg.norm(best_r * directions[best_col] - np.round(best_r * directions[best_col]))
    )
    rhs = float(_tuple_rhs(np.array(best_r), np.array(coef_norms[best_col]), q))
    return LcdResult(
        float(best_r),
        {"radius": float(best_r), "theta": theta},
        True,
        (tn, rhs),
        q.resolution,
    )


@dataclass(frozen=True)
class SparseDistance:
    """Distance from a vector to its best k-sparse approximation, where k is
    the coordinate budget floor(delta*n) recorded alongside."""

    distance: float
    budget: int

    def compressible(self, rho: float) -> bool:
        return self.distance <= rho


def sparse_distance(v: np.ndarray, delta: float) -> SparseDistance:
    """Norm of everything outside the floor(delta*n) largest-magnitude
    coordinates; with a zero budget the distance is the full norm."""
    v = np.asarray(v, dtype=np.float64)
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    k = int(math.floor(delta * v.size))
    if k == 0:
        return SparseDistance(float(np.linalg.norm(v)), 0)
    if k >= v.size:
        return SparseDistance(0.0, k)
    mags = np.abs(v)
    tail = np.partition(mags, v.size - k)[: v.size - k]
    return SparseDistance(float(np.linalg.norm(tail)), k)


def sine_angle(v: np.ndarray, w: np.ndarray) -> float:
    """sin of the angle between two nonzero vectors, in [0, 1]."""
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    nv, nw = np.linalg.norm(v), np.linalg.norm(w)
    if nv == 0.0 or nw == 0.0:
        raise ValueError("sine_angle needs nonzero vectors")
    c = float(np.dot(v, w) / (nv * nw))
    c = max(-1.0, min(1.0, c))
    return math.sqrt(max(0.0, 1.0 - c * c))


def levy_concentration(
    samples: np.ndarray,
    t: float,
    centers: np.ndarray | None = None,
) -> float:
    """Empirical small-ball concentration: max over candidate centers of the
    fraction of samples within distance t.

    A lower bound on the true supremum over all centers; the default
    candidate set is the origin, the sample mean, and (for at most 1000
    samples) every sample point.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.size == 0:
        raise ValueError("levy_concentration needs samples")
    if t < 0:
        raise ValueError("radius t must be nonnegative")
    if centers is None:
        cands = [np.zeros(samples.shape[1]), samples.mean(axis=0)]
        if samples.shape[0] <= 1000:
            cands.extend(samples)
        centers = np.stack(cands)
    else:
        centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        if centers.size == 0:
            raise ValueError("center set must be nonempty")
    best = 0.0
    for c in centers:
        frac = float(
            np.count_nonzero(np.linalg.norm(samples - c[None, :], axis=1) <= t)
        ) / samples.shape[0]
        best = max(best, frac)
    return best


@dataclass(frozen=True)
class TauPoint:
    t: float
    successes: int
    trials: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    benchmark: float


@dataclass(frozen=True)
class TauResult:
    """Monte Carlo threshold estimate: the largest grid radius whose small-ball
    probability stays above the benchmark curve, with the whole curve kept for
    inspection."""

    tau: float
    curve: tuple[TauPoint, ...]
    trials: int
    seed_lineage: str


def threshold_tau(
    v: np.ndarray,
    w: np.ndarray,
    big_l: float,
    eps1: float,
    spec: ZeroedSpec,
    trials: int,
    rng: RngHandle,
    l0: float | None = None,
) -> TauResult:
    """Threshold radius for the image pair (M*v, M*w) of the zeroed-out
    matrix.

    Estimates p(t) = P(||(M v, M w)||_2 <= t*sqrt(n)) on a 64-point log grid
    over [1e-4, 1] and returns the largest grid t with p_hat(t) >=
    (4*L^2*t^2/eps1)^n — or, when ``eps1`` is 0, the variant benchmark
    (4*l0^2*t)^n with caller-supplied ``l0``.  The supremum of an empty set
    is reported as 0.0.  With v = w = 0 the image is identically zero and the
    threshold is the grid maximum, 1.0.
    """
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if v.shape != (spec.n,) or w.shape != (spec.n,):
        raise ValueError("v and w must have length spec.n")
    if trials < 100:
        raise ValueError("need at least 100 trials")
    if not big_l > 0:
        raise ValueError("big_l must be positive")
    if eps1 < 0:
        raise ValueError("eps1 must be nonnegative")
    if eps1 == 0 and l0 is None:
        raise ValueError("the eps1=0 variant needs the caller to supply l0")
    norms = np.empty(trials)
    for i in range(trials):
        h1 = sample_sparse_block(spec.base, spec.nu, spec.n - spec.d, spec.d, rng.child(i))
        norms[i] = zeroed_pair_image(h1, v, w)
    norms.sort()
    scale = math.sqrt(spec.n)
    if eps1 == 0:
        benchmarks = (4.0 * l0 * l0 * TAU_GRID) ** spec.n
    else:
        benchmarks = (4.0 * big_l * big_l * TAU_GRID**2 / eps1) ** spec.n
    points = []
    zero_image = not (np.any(v) or np.any(w))
    tau = 1.0 if zero_image else 0.0
    for t, benchmark in zip(TAU_GRID, benchmarks):
        successes = int(np.searchsorted(norms, t * scale, side="right"))
        lo, hi = wilson_interval(successes, trials)
        points.append(
            TauPoint(float(t), successes, trials, successes / trials, lo, hi, float(benchmark))
        )
        if not zero_image and successes / trials >= benchmark:
            tau = max(tau, float(t))
    return TauResult(tau, tuple(points), trials, rng.describe())
