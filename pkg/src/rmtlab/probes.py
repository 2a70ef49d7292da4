"""Monte Carlo probes: each theorem-level claim becomes an event frequency
with a Wilson interval, or a per-rank distribution summary.

Replica layout and determinism
------------------------------
Replica r of a config with master seed s draws its matrix from the stream
``(s) -> child(1, r, 0)`` and its probe column (Hanson-Wright) from
``child(3, r)``; reference objects use ``child(2, ...)``.  Replicas are
processed in fixed chunks of 2048; a worker pool only changes which process
computes a chunk, never the chunk boundaries or the per-replica streams, and
aggregation is integer counting / ordered concatenation — so results are
bit-identical for every worker count.

Probes that share a config evaluate related events on the *same* replicas
(e.g. joint and marginal small-ball events), which cancels replica noise in
derived ratios.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .ensemble import DistributionSpec, sample_column, sample_sparse_block, sample_symmetric
from .rng import RngHandle
from .spectral import semicircle_density
from .stats import EstimateRecord, make_estimate, wilson_interval
from . import spectral

_NS_REPLICA = 1
_NS_REFERENCE = 2
_NS_VECTOR = 3

_CHUNK = 2048
_EIG_BATCH_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class ProbeConfig:
    """Shared Monte Carlo setup: ensemble, size, replica count, master seed,
    shift locations (absolute units), a radius grid, and tolerance knobs.

    Recognized tolerance keys (all optional): ``kappa`` (bulk margin, default
    0.05), ``separation`` (two-point separation multiple of sqrt(n), default
    = kappa), ``distinct_gap`` (singular-value tie tolerance, default
    1e-10*sqrt(n)), ``z`` (Wilson quantile, default 1.96).
    """

    ensemble: DistributionSpec
    n: int
    replicas: int
    master_seed: int
    lambdas: tuple[float, ...] = ()
    delta_grid: tuple[float, ...] = ()
    tolerances: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.n < 1 or self.replicas < 1:
            raise ValueError("n and replicas must be positive")
        lambdas = tuple(float(x) for x in self.lambdas)
        if not all(math.isfinite(x) for x in lambdas):
            raise ValueError("shift locations must be finite")
        deltas = tuple(float(d) for d in self.delta_grid)
        if any(d <= 0 for d in deltas):
            raise ValueError("delta grid entries must be positive")
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "delta_grid", deltas)
        object.__setattr__(self, "tolerances", dict(self.tolerances))

    @property
    def kappa(self) -> float:
        return float(self.tolerances.get("kappa", 0.05))

    @property
    def separation(self) -> float:
        return float(self.tolerances.get("separation", self.kappa))

    @property
    def distinct_gap(self) -> float:
        return float(self.tolerances.get("distinct_gap", 1e-10 * math.sqrt(self.n)))

    @property
    def z(self) -> float:
        return float(self.tolerances.get("z", 1.96))

    def in_bulk(self, lam: float) -> bool:
        return abs(lam) <= (2.0 - self.kappa) * math.sqrt(self.n)


def _lineage(cfg: ProbeConfig) -> str:
    return (
        f"philox-sha256:{cfg.master_seed}:{_NS_REPLICA}/r/0"
        f";r<{cfg.replicas}"
    )


def _replica_dense(cfg: ProbeConfig, r: int) -> np.ndarray:
    handle = RngHandle(cfg.master_seed).child(_NS_REPLICA, r, 0)
    return sample_symmetric(cfg.n, cfg.ensemble, handle).to_dense()


def _eig_groups(cfg: ProbeConfig, start: int, stop: int):
    """Yield (replica_start, eigenvalue_batch) with batch sizes bounded so the
    stacked matrices stay within a fixed memory budget."""
    group = max(1, _EIG_BATCH_ELEMENTS // (cfg.n * cfg.n))
    for gs in range(start, stop, group):
        ge = min(gs + group, stop)
        mats = np.stack([_replica_dense(cfg, r) for r in range(gs, ge)])
        yield gs, np.linalg.eigvalsh(mats)


def _eigh_groups(cfg: ProbeConfig, start: int, stop: int):
    group = max(1, _EIG_BATCH_ELEMENTS // (cfg.n * cfg.n))
    for gs in range(start, stop, group):
        ge = min(gs + group, stop)
        mats = np.stack([_replica_dense(cfg, r) for r in range(gs, ge)])
        w, v = np.linalg.eigh(mats)
        yield gs, w, v


def _chunk_sigma_mins(
    cfg: ProbeConfig, lambdas: tuple[float, ...], start: int, stop: int
) -> np.ndarray:
    out = np.empty((stop - start, len(lambdas)))
    for gs, eigs in _eig_groups(cfg, start, stop):
        for j, lam in enumerate(lambdas):
            out[gs - start : gs - start + eigs.shape[0], j] = np.min(
                np.abs(eigs - lam), axis=1
            )
    return out


def _chunk_gap_stats(
    cfg: ProbeConfig, lo: float, hi: float, start: int, stop: int
) -> np.ndarray:
    out = np.empty(stop - start)
    for gs, eigs in _eig_groups(cfg, start, stop):
        sv = np.sort(np.abs(eigs), axis=1)[:, ::-1]
        for i in range(sv.shape[0]):
            inside = sv[i][(sv[i] >= lo) & (sv[i] <= hi)]
            out[gs - start + i] = (
                math.inf if inside.size < 2 else float(np.min(-np.diff(inside)))
            )
    return out


def _chunk_linstat(
    cfg: ProbeConfig, a2: float, target: float, separation: float, start: int, stop: int
) -> np.ndarray:
    out = np.empty(stop - start)
    for gs, eigs in _eig_groups(cfg, start, stop):
        for i in range(eigs.shape[0]):
            x = eigs[i]
            resid = np.abs(x[:, None] + a2 * x[None, :] - target)
            distant = np.abs(x[:, None] - x[None, :]) >= separation
            np.fill_diagonal(distant, False)
            out[gs - start + i] = (
                float(resid[distant].min()) if np.any(distant) else math.inf
            )
    return out


def _chunk_rigidity(
    cfg: ProbeConfig, lam: float, ks: tuple[int, ...], start: int, stop: int
) -> np.ndarray:
    karr = np.asarray(ks, dtype=np.intp)
    out = np.empty((stop - start, karr.size))
    scale = math.sqrt(cfg.n)
    for gs, eigs in _eig_groups(cfg, start, stop):
        gaps = np.sort(np.abs(eigs - lam), axis=1)
        cap = 1e-14 * (1.0 + np.max(np.abs(eigs), axis=1, keepdims=True))
        mu = 1.0 / np.maximum(gaps, cap)
        out[gs - start : gs - start + eigs.shape[0]] = (
            mu[:, karr - 1] * karr[None, :] / scale
        )
    return out


def _chunk_locallaw(
    cfg: ProbeConfig, energy: float, eta: float, start: int, stop: int
) -> np.ndarray:
    out = np.empty(stop - start)
    target = semicircle_density(energy)
    half = 0.5 * eta
    scale = math.sqrt(cfg.n)
    for gs, eigs in _eig_groups(cfg, start, stop):
        scaled = eigs / scale
        counts = np.count_nonzero(
            (scaled >= energy - half) & (scaled <= energy + half), axis=1
        )
        out[gs - start : gs - start + eigs.shape[0]] = np.abs(
            counts / (cfg.n * eta) - target
        )
    return out


def _chunk_hw(
    cfg: ProbeConfig, matrix: np.ndarray, hs: float, start: int, stop: int
) -> np.ndarray:
    out = np.empty(stop - start)
    base = RngHandle(cfg.master_seed)
    for i, r in enumerate(range(start, stop)):
        x = sample_column(cfg.n, cfg.ensemble, base.child(_NS_VECTOR, r))
        out[i] = abs(float(np.linalg.norm(matrix @ x)) - hs)
    return out


def _chunk_deloc_minfrac(cfg: ProbeConfig, tau: float, start: int, stop: int) -> np.ndarray:
    out = np.empty(stop - start)
    thresh = tau / math.sqrt(cfg.n)
    for gs, _, vecs in _eigh_groups(cfg, start, stop):
        fracs = np.count_nonzero(np.abs(vecs) >= thresh, axis=1) / cfg.n
        out[gs - start : gs - start + vecs.shape[0]] = fracs.min(axis=1)
    return out


def _chunk_bl(cfg: ProbeConfig, grid_step: float, start: int, stop: int) -> np.ndarray:
    out = np.empty(stop - start)
    for gs, eigs in _eig_groups(cfg, start, stop):
        for i in range(eigs.shape[0]):
            dec = spectral.SpectralDecomposition(
                cfg.n, eigs[i], np.eye(cfg.n)
            )
            out[gs - start + i] = spectral.bl_distance_to_semicircle(dec, grid_step)
    return out


def _chunk_lcd_min(
    cfg: ProbeConfig,
    alpha: float,
    gamma: float,
    phi_max: float,
    resolution: float,
    k_lo: int,
    k_hi: int,
    start: int,
    stop: int,
) -> np.ndarray:
    from .arithmetic import LcdQuery, lcd_batch

    q = LcdQuery(alpha, gamma, phi_max, resolution)
    out = np.empty(stop - start)
    for gs, _, vecs in _eigh_groups(cfg, start, stop):
        for i in range(vecs.shape[0]):
            cols = vecs[i][:, k_lo - 1 : k_hi].T
            norms = np.linalg.norm(cols, axis=1)
            values = lcd_batch(cols / norms[:, None], q)
            values = np.where(np.isnan(values), math.inf, values)
            out[gs - start + i] = float(values.min())
    return out


def _run_chunked(fn: Callable[[int, int], np.ndarray], replicas: int, workers: int) -> np.ndarray:
    bounds = [(s, min(s + _CHUNK, replicas)) for s in range(0, replicas, _CHUNK)]
    if workers <= 1 or len(bounds) == 1:
        parts = [fn(s, e) for s, e in bounds]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(bounds))) as pool:
            parts = list(pool.map(fn, *zip(*bounds)))
    return np.concatenate(parts, axis=0)


def smallball_statistics(
    cfg: ProbeConfig, lambdas: Sequence[float], workers: int = 1
) -> np.ndarray:
    """sigma_min(A - lambda*I) per replica and location — the shared statistic
    behind all small-ball probes (shape: replicas x len(lambdas))."""
    fn = partial(_chunk_sigma_mins, cfg, tuple(float(x) for x in lambdas))
    return _run_chunked(fn, cfg.replicas, workers)


def _smallball_record(
    cfg: ProbeConfig,
    probe: str,
    successes: int,
    params: dict[str, Any],
) -> EstimateRecord:
    return make_estimate(
        probe, cfg.n, successes, cfg.replicas, _lineage(cfg), params, z=cfg.z
    )


def smallball_one(
    cfg: ProbeConfig, lam: float, delta: float, workers: int = 1
) -> EstimateRecord:
    """Frequency of {sigma_min(A - lam) <= delta / sqrt(n)}."""
    return smallball_curve(cfg, lam, [delta], workers)[0]


def smallball_curve(
    cfg: ProbeConfig, lam: float, deltas: Sequence[float], workers: int = 1
) -> list[EstimateRecord]:
    """One-point small-ball frequencies over a delta grid, evaluated on a
    single shared replica set (so successes are nondecreasing in delta)."""
    if any(d <= 0 for d in deltas):
        raise ValueError("delta must be positive")
    sig = smallball_statistics(cfg, [lam], workers)[:, 0]
    scale = math.sqrt(cfg.n)
    records = []
    for delta in deltas:
        successes = int(np.count_nonzero(sig <= delta / scale))
        params: dict[str, Any] = {"lambda1": float(lam), "delta1": float(delta)}
        if not cfg.in_bulk(lam):
            params["bulk_violation"] = True
        records.append(_smallball_record(cfg, "smallball", successes, params))
    return records


def smallball_joint(
    cfg: ProbeConfig,
    lam1: float,
    lam2: float,
    delta1: float,
    delta2: float,
    workers: int = 1,
) -> EstimateRecord:
    """Joint two-point small-ball frequency, with marginal estimates and the
    decoupling ratio p_joint/(p1*p2) computed on the same replicas."""
    return smallball_joint_curve(cfg, lam1, lam2, [(delta1, delta2)], workers)[0]


def smallball_joint_curve(
    cfg: ProbeConfig,
    lam1: float,
    lam2: float,
    delta_pairs: Sequence[tuple[float, float]],
    workers: int = 1,
) -> list[EstimateRecord]:
    sig = smallball_statistics(cfg, [lam1, lam2], workers)
    scale = math.sqrt(cfg.n)
    separated = abs(lam1 - lam2) >= cfg.separation * scale
    records = []
    for delta1, delta2 in delta_pairs:
        if delta1 < 0 or delta2 < 0:
            raise ValueError("delta must be nonnegative")
        ev1 = sig[:, 0] <= delta1 / scale
        ev2 = sig[:, 1] <= delta2 / scale
        joint = int(np.count_nonzero(ev1 & ev2))
        p1 = float(np.count_nonzero(ev1)) / cfg.replicas
        p2 = float(np.count_nonzero(ev2)) / cfg.replicas
        p_joint = joint / cfg.replicas
        params: dict[str, Any] = {
            "lambda1": float(lam1),
            "lambda2": float(lam2),
            "delta1": float(delta1),
            "delta2": float(delta2),
            "p1": p1,
            "p2": p2,
            "decoupling_ratio": (p_joint / (p1 * p2)) if p1 > 0 and p2 > 0 else math.nan,
        }
        if not separated:
            params["separation_violation"] = True
        if not (cfg.in_bulk(lam1) and cfg.in_bulk(lam2)):
            params["bulk_violation"] = True
        records.append(_smallball_record(cfg, "joint", joint, params))
    return records


def gap_law(
    cfg: ProbeConfig,
    interval: tuple[float, float],
    eps_grid: Sequence[float],
    workers: int = 1,
) -> list[EstimateRecord]:
    """Minimal singular-value gap law on an absolute interval: per epsilon the
    frequency of {min gap <= eps * n^{-3/2}}, plus a trailing record with the
    frequency of all-distinct singular values at the tie tolerance."""
    lo, hi = float(interval[0]), float(interval[1])
    if not lo <= hi:
        raise ValueError("empty interval")
    if any(e < 0 for e in eps_grid):
        raise ValueError("eps grid must be nonnegative")
    gaps = _run_chunked(partial(_chunk_gap_stats, cfg, lo, hi), cfg.replicas, workers)
    scale = cfg.n ** -1.5
    root = math.sqrt(cfg.n)
    bulk_ok = lo >= cfg.kappa * root and hi <= (2.0 - cfg.kappa) * root
    records = []
    for eps in eps_grid:
        successes = int(np.count_nonzero(gaps <= eps * scale))
        params: dict[str, Any] = {
            "interval": [lo, hi],
            "eps": float(eps),
        }
        if not bulk_ok:
            params["bulk_violation"] = True
        records.append(_smallball_record(cfg, "gaps", successes, params))
    distinct = int(np.count_nonzero(gaps > cfg.distinct_gap))
    records.append(
        _smallball_record(
            cfg,
            "gaps_distinct",
            distinct,
            {"interval": [lo, hi], "tolerance": cfg.distinct_gap},
        )
    )
    return records


def linear_statistic(
    cfg: ProbeConfig,
    a2: float,
    target: float,
    eps_grid: Sequence[float],
    separation: float,
    workers: int = 1,
) -> list[EstimateRecord]:
    """Frequency that some eigenvalue pair (x1, x2), |x1 - x2| >= separation,
    satisfies |x1 + a2*x2 - target| <= eps * n^{-3/2}."""
    if separation < 0:
        raise ValueError("separation must be nonnegative")
    resid = _run_chunked(
        partial(_chunk_linstat, cfg, float(a2), float(target), float(separation)),
        cfg.replicas,
        workers,
    )
    scale = cfg.n ** -1.5
    records = []
    for eps in eps_grid:
        successes = int(np.count_nonzero(resid <= eps * scale))
        params = {
            "a2": float(a2),
            "target": float(target),
            "separation": float(separation),
            "eps": float(eps),
        }
        records.append(_smallball_record(cfg, "linstat", successes, params))
    return records


@dataclass(frozen=True)
class RigidityRow:
    k: int
    mean: float
    p5: float
    p95: float


@dataclass(frozen=True)
class RigidityProfile:
    """Distribution summary of mu_k * k / sqrt(n) per rank k across replicas."""

    lam: float
    n: int
    replicas: int
    rows: tuple[RigidityRow, ...]
    seed_lineage: str


def rigidity_profile(
    cfg: ProbeConfig, lam: float, k_range: Sequence[int], workers: int = 1
) -> RigidityProfile:
    ks = tuple(int(k) for k in k_range)
    if not ks or min(ks) < 1 or max(ks) > cfg.n:
        raise ValueError("k range must lie within [1, n]")
    stats = _run_chunked(
        partial(_chunk_rigidity, cfg, float(lam), ks), cfg.replicas, workers
    )
    rows = tuple(
        RigidityRow(
            k,
            float(np.mean(stats[:, j])),
            float(np.percentile(stats[:, j], 5)),
            float(np.percentile(stats[:, j], 95)),
        )
        for j, k in enumerate(ks)
    )
    return RigidityProfile(float(lam), cfg.n, cfg.replicas, rows, _lineage(cfg))


def local_law_deviation(
    cfg: ProbeConfig,
    energy: float,
    eta: float,
    delta_grid: Sequence[float],
    workers: int = 1,
) -> list[EstimateRecord]:
    """Per delta: frequency of {|N(window)/(n*eta) - rho_sc(E)| >= delta}."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    devs = _run_chunked(
        partial(_chunk_locallaw, cfg, float(energy), float(eta)), cfg.replicas, workers
    )
    records = []
    eta_ok = 1.0 / cfg.n <= eta <= 1.0
    for delta in delta_grid:
        if delta <= 0:
            raise ValueError("delta must be positive")
        successes = int(np.count_nonzero(devs >= delta))
        params: dict[str, Any] = {
            "energy": float(energy),
            "eta": float(eta),
            "delta": float(delta),
        }
        if not eta_ok:
            params["eta_warning"] = True
        records.append(_smallball_record(cfg, "locallaw", successes, params))
    return records


@dataclass(frozen=True)
class TailRow:
    t: float
    successes: int
    trials: int
    frequency: float
    ci_lo: float
    ci_hi: float
    gaussian_shape: float
    exponential_shape: float


@dataclass(frozen=True)
class HwTail:
    """Empirical tail of |''Mx'' - hs(M)| with the two predicted exponent
    regimes (exp(-t^2 / (B^4 hs^2)) and exp(-t / (B^2 op))) for plotting."""

    rows: tuple[TailRow, ...]
    hs: float
    op: float
    matrix_source: str
    n: int
    replicas: int
    seed_lineage: str


def hanson_wright_tail(
    cfg: ProbeConfig,
    matrix_source: str = "identity",
    t_grid: Sequence[float] = (),
    workers: int = 1,
) -> HwTail:
    """Tail frequencies of the quadratic-form deviation |''MX'' - ''M''_HS|.

    ``matrix_source`` is ``"identity"`` or ``"resolvent"`` (the shifted
    inverse of one reference matrix drawn from the reference stream, at the
    first configured location).
    """
    if matrix_source == "identity":
        matrix = np.eye(cfg.n)
        hs = math.sqrt(cfg.n)
        op = 1.0
    elif matrix_source == "resolvent":
        ref = sample_symmetric(
            cfg.n, cfg.ensemble, RngHandle(cfg.master_seed).child(_NS_REFERENCE, 0)
        )
        dec = spectral.eig_symmetric(ref)
        lam = cfg.lambdas[0] if cfg.lambdas else 0.0
        shift = spectral.shifted_spectrum(dec, lam)
        if shift.resonant:
            raise ValueError("reference resolvent is resonant; move lambda or reseed")
        matrix = (dec.eigenvectors / (dec.eigenvalues - lam)[None, :]) @ dec.eigenvectors.T
        hs = spectral.hs_norm(shift)
        op = float(shift.mu[0])
    else:
        raise ValueError(f"unknown matrix source {matrix_source!r}")
    if not t_grid:
        raise ValueError("t grid must be nonempty")
    stats = _run_chunked(partial(_chunk_hw, cfg, matrix, hs), cfg.replicas, workers)
    b = cfg.ensemble.subgaussian_b
    rows = []
    for t in t_grid:
        if t < 0:
            raise ValueError("tail points must be nonnegative")
        successes = int(np.count_nonzero(stats > t))
        lo, hi_ci = wilson_interval(successes, cfg.replicas, cfg.z)
        rows.append(
            TailRow(
                float(t),
                successes,
                cfg.replicas,
                successes / cfg.replicas,
                lo,
                hi_ci,
                math.exp(-(t * t) / (b**4 * hs * hs)),
                math.exp(-t / (b * b * op)),
            )
        )
    return HwTail(
        tuple(rows), hs, op, matrix_source, cfg.n, cfg.replicas, _lineage(cfg)
    )


def delocalization_frequency(
    cfg: ProbeConfig, tau: float, frac_threshold: float, workers: int = 1
) -> EstimateRecord:
    """Frequency that every eigenvector of a sample has at least
    frac_threshold * n coordinates of magnitude >= tau / sqrt(n)."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if not 0.0 <= frac_threshold <= 1.0:
        raise ValueError("frac_threshold must lie in [0, 1]")
    minfrac = _run_chunked(
        partial(_chunk_deloc_minfrac, cfg, float(tau)), cfg.replicas, workers
    )
    successes = int(np.count_nonzero(minfrac >= frac_threshold))
    return _smallball_record(
        cfg,
        "deloc",
        successes,
        {"tau": float(tau), "frac_threshold": float(frac_threshold)},
    )


def bl_distances(cfg: ProbeConfig, grid_step: float = 0.01, workers: int = 1) -> np.ndarray:
    """Bounded-Lipschitz distance to the semicircle law, per replica."""
    return _run_chunked(partial(_chunk_bl, cfg, grid_step), cfg.replicas, workers)


def lcd_frequency(
    cfg: ProbeConfig,
    alpha: float,
    gamma: float,
    phi_max: float,
    resolution: float,
    threshold: float,
    k_lo: int,
    k_hi: int,
    workers: int = 1,
) -> EstimateRecord:
    """Frequency that every eigenvector with eigenvalue rank in [k_lo, k_hi]
    (ascending order, 1-based) has essential LCD at least ``threshold``;
    values capped at phi_max count as satisfying any threshold <= phi_max."""
    if not 1 <= k_lo <= k_hi <= cfg.n:
        raise ValueError("rank window out of range")
    if threshold > phi_max:
        raise ValueError("threshold above the search cap is never certifiable")
    mins = _run_chunked(
        partial(
            _chunk_lcd_min, cfg, alpha, gamma, phi_max, resolution, k_lo, k_hi
        ),
        cfg.replicas,
        workers,
    )
    successes = int(np.count_nonzero(mins >= threshold))
    return _smallball_record(
        cfg,
        "lcd",
        successes,
        {
            "alpha": alpha,
            "gamma": gamma,
            "phi_max": phi_max,
            "resolution": resolution,
            "threshold": threshold,
            "k_lo": k_lo,
            "k_hi": k_hi,
            "min_over_run": float(np.min(mins)) if mins.size else math.nan,
        },
    )


def ilo_event_frequency(
    n: int,
    d: int,
    k: int,
    c0: float,
    nu: float,
    spec: DistributionSpec,
    xs: Sequence[np.ndarray],
    trials: int,
    rng: RngHandle,
) -> EstimateRecord:
    """Frequency of the conditioned rank event on the rectangular sparse
    matrix H ((n-d) x 2d, i.i.d. sparse difference entries): the k-th smallest
    singular value of H is at most c0 * 2^-4 * sqrt(n) AND both half-block
    images of every supplied vector have norm at most n."""
    if not (1 <= d and 3 * d <= n):
        raise ValueError("need 1 <= d and 3*d <= n")
    if not d <= c0 * c0 * n:
        raise ValueError("need d <= c0^2 * n")
    if not 1 <= k <= 2 * d:
        raise ValueError("rank k must lie in [1, 2d]")
    if trials < 1:
        raise ValueError("trials must be positive")
    vecs = [np.asarray(x, dtype=np.float64) for x in xs]
    if any(v.shape != (d,) for v in vecs):
        raise ValueError("each conditioning vector must have length d")
    sv_cap = c0 * (2.0**-4) * math.sqrt(n)
    group = max(1, _EIG_BATCH_ELEMENTS // max(1, (n - d) * 2 * d))
    successes = 0
    for gs in range(0, trials, group):
        ge = min(gs + group, trials)
        hs = np.stack(
            [
                sample_sparse_block(spec, nu, n - d, 2 * d, rng.child(i))
                for i in range(gs, ge)
            ]
        )
        gram = np.einsum("tij,til->tjl", hs, hs)
        evals = np.linalg.eigvalsh(gram)
        sv_k = np.sqrt(np.clip(evals[:, k - 1], 0.0, None))
        ok = sv_k <= sv_cap
        for v in vecs:
            h1v = hs[:, :, :d] @ v
            h2v = hs[:, :, d:] @ v
            ok &= np.linalg.norm(h1v, axis=1) <= n
            ok &= np.linalg.norm(h2v, axis=1) <= n
        successes += int(np.count_nonzero(ok))
    return make_estimate(
        "ilo",
        n,
        successes,
        trials,
        f"{rng.describe()}/i;i<{trials}",
        {
            "d": d,
            "k": k,
            "c0": c0,
            "nu": nu,
            "num_vectors": len(vecs),
        },
    )
