"""Estimate records and the small statistical toolkit shared by the Monte
Carlo layers: Wilson and exact binomial intervals, and log-log slope fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, NamedTuple

import numpy as np
from scipy import stats as _sps


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes out of range")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    return (max(0.0, center - half), min(1.0, center + half))


def exact_binomial_interval(
    successes: int, trials: int, confidence: float = 0.95
) -> tuple[float, float]:
    """Clopper-Pearson interval (beta quantiles); exact coverage guarantee."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes out of range")
    tail = (1.0 - confidence) / 2.0
    lo = 0.0 if successes == 0 else float(_sps.beta.ppf(tail, successes, trials - successes + 1))
    hi = (
        1.0
        if successes == trials
        else float(_sps.beta.ppf(1.0 - tail, successes + 1, trials - successes))
    )
    return (lo, hi)


@dataclass(frozen=True)
class EstimateRecord:
    """One Monte Carlo estimate of an event probability.

    ``params`` carries probe-specific identifiers (shift locations, radii,
    thresholds); ``seed_lineage`` is the stream descriptor that reproduces the
    replica set exactly.
    """

    probe: str
    n: int
    successes: int
    trials: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    seed_lineage: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0 <= self.successes <= self.trials:
            raise ValueError("successes out of range")
        if self.trials > 0 and abs(self.p_hat - self.successes / self.trials) > 1e-12:
            raise ValueError("p_hat inconsistent with counts")
        if not 0.0 <= self.ci_lo <= self.ci_hi <= 1.0:
            raise ValueError("confidence interval malformed")


def make_estimate(
    probe: str,
    n: int,
    successes: int,
    trials: int,
    seed_lineage: str,
    params: Mapping[str, Any] | None = None,
    z: float = 1.96,
) -> EstimateRecord:
    lo, hi = wilson_interval(successes, trials, z)
    return EstimateRecord(
        probe=probe,
        n=n,
        successes=successes,
        trials=trials,
        p_hat=successes / trials,
        ci_lo=lo,
        ci_hi=hi,
        seed_lineage=seed_lineage,
        params=dict(params or {}),
    )


class SlopeFit(NamedTuple):
    slope: float
    intercept: float
    stderr: float
    r_squared: float
    points_used: int


def fit_log_slope(x: np.ndarray, y: np.ndarray) -> SlopeFit:
    """Least-squares slope of log(y) against log(x), dropping zero/negative
    points (they carry no log-log information)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = (x > 0) & (y > 0)
    if np.count_nonzero(keep) < 2:
        raise ValueError("need at least two positive points for a slope fit")
    lx, ly = np.log(x[keep]), np.log(y[keep])
    if np.allclose(ly, ly[0]):
        # constant response: slope 0 with no scatter
        return SlopeFit(0.0, float(ly[0]), 0.0, 1.0, int(lx.size))
    res = _sps.linregress(lx, ly)
    return SlopeFit(
        float(res.slope),
        float(res.intercept),
        float(res.stderr),
        float(res.rvalue**2),
        int(lx.size),
    )
