"""Random sources: entry laws, symmetric matrices, columns, random index
subsets, the zeroed-out sparse block matrix, and integer box-pair sampling.

Draw-order contracts
--------------------
Samplers consume values from the entry-value stream of their handle in a fixed
documented order, so outputs are reproducible bit for bit:

* ``sample_symmetric`` consumes exactly ``n*(n+1)//2`` entry draws, assigned to
  the upper triangle in row-major order ``(0,0), (0,1), ..., (n-1,n-1)`` and
  mirrored.
* ``sample_zeroed_matrix`` consumes, in order: the ``(n-d)*d`` entries of the
  first base draw (row-major over the off-diagonal block), the ``(n-d)*d``
  entries of the second base draw, then ``(n-d)*d`` uniforms for the Bernoulli
  sparsifier.
* ``sample_box_vector_pair`` consumes one uniform integer per coordinate of the
  first vector (coordinate order 0..n-1), then one per coordinate of the second.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .rng import RngHandle

_KINDS = ("rademacher", "gaussian", "discrete")


@lru_cache(maxsize=256)
def _tril(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.tril_indices(n)


@lru_cache(maxsize=256)
def _triu(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n)


@dataclass(frozen=True)
class DistributionSpec:
    """A centered entry law: Rademacher, standard Gaussian, or finite discrete.

    ``subgaussian_b`` is descriptive metadata (a sub-Gaussian moment scale used
    when plotting predicted tail shapes); it is never enforced numerically.
    The declared law must be centered; the variance is 1 by definition for the
    named laws and is computed (not constrained) for discrete ones.
    """

    kind: str
    values: tuple[float, ...] | None = None
    probs: tuple[float, ...] | None = None
    subgaussian_b: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "discrete":
            if self.values is None or self.probs is None:
                raise ValueError("discrete law needs values and probs")
            values = tuple(float(v) for v in self.values)
            probs = tuple(float(p) for p in self.probs)
            if len(values) != len(probs) or not values:
                raise ValueError("values and probs must be nonempty, equal length")
            if not all(math.isfinite(v) for v in values):
                raise ValueError("discrete values must be finite")
            if min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-12:
                raise ValueError("probs must be nonnegative and sum to 1")
            mean = sum(v * p for v, p in zip(values, probs))
            if abs(mean) > 1e-12:
                raise ValueError(f"law must be centered; got mean {mean}")
            object.__setattr__(self, "values", values)
            object.__setattr__(self, "probs", probs)
        elif self.values is not None or self.probs is not None:
            raise ValueError(f"{self.kind} law takes no values/probs")
        if not self.subgaussian_b > 0:
            raise ValueError("subgaussian_b must be positive")

    @property
    def mean(self) -> float:
        return 0.0

    @property
    def variance(self) -> float:
        if self.kind == "discrete":
            return float(sum(v * v * p for v, p in zip(self.values, self.probs)))
        return 1.0

    @classmethod
    def rademacher(cls) -> "DistributionSpec":
        return cls("rademacher")

    @classmethod
    def gaussian(cls) -> "DistributionSpec":
        return cls("gaussian")

    @classmethod
    def discrete(cls, values: Sequence[float], probs: Sequence[float]) -> "DistributionSpec":
        return cls("discrete", tuple(values), tuple(probs))

    def sample(self, rng: RngHandle, size: int) -> np.ndarray:
        """``size`` i.i.d. draws — the entry-value stream all samplers consume."""
        g = rng.generator
        if self.kind == "rademacher":
            return (g.integers(0, 2, size=size) * 2 - 1).astype(np.float64)
        if self.kind == "gaussian":
            return g.standard_normal(size)
        cum = np.cumsum(self.probs)
        idx = np.searchsorted(cum, g.random(size), side="right")
        idx = np.minimum(idx, len(self.values) - 1)
        return np.asarray(self.values, dtype=np.float64)[idx]


def sample_entry(spec: DistributionSpec, rng: RngHandle) -> float:
    """One draw from the law (the next value of the handle's entry stream)."""
    return float(spec.sample(rng, 1)[0])


@dataclass(frozen=True)
class SymmetricMatrix:
    """Dense symmetric matrix stored as its packed lower triangle.

    Symmetry is exact by construction: only one copy of each off-diagonal
    entry exists.  ``lower`` holds the row-major lower triangle, length
    ``n*(n+1)//2``.
    """

    n: int
    lower: np.ndarray

    def __post_init__(self) -> None:
        expected = self.n * (self.n + 1) // 2
        if self.n < 1 or self.lower.shape != (expected,):
            raise ValueError("packed lower triangle has wrong length")

    @classmethod
    def from_dense(cls, a: np.ndarray) -> "SymmetricMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("need a square matrix")
        if not np.array_equal(a, a.T):
            raise ValueError("matrix is not exactly symmetric")
        n = a.shape[0]
        return cls(n, a[_tril(n)].copy())

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        il = _tril(self.n)
        a[il] = self.lower
        a[(il[1], il[0])] = self.lower
        return a

    def __array__(self, dtype=None, copy=None) -> np.ndarray:
        dense = self.to_dense()
        return dense.astype(dtype) if dtype is not None else dense


def sample_symmetric(n: int, spec: DistributionSpec, rng: RngHandle) -> SymmetricMatrix:
    """Symmetric matrix with i.i.d. upper-triangle entries from ``spec``."""
    if n < 1:
        raise ValueError("n must be positive")
    draws = spec.sample(rng, n * (n + 1) // 2)
    a = np.zeros((n, n))
    iu = _triu(n)
    a[iu] = draws
    a[(iu[1], iu[0])] = draws
    return SymmetricMatrix(n, a[_tril(n)].copy())


def sample_column(n: int, spec: DistributionSpec, rng: RngHandle) -> np.ndarray:
    """Column vector of n i.i.d. entries."""
    if n < 1:
        raise ValueError("n must be positive")
    return spec.sample(rng, n)


def sample_mu_subset(n: int, mu: float, rng: RngHandle) -> np.ndarray:
    """Random subset of range(n): each index kept independently w.p. mu."""
    if not 0.0 < mu < 1.0:
        raise ValueError("mu must lie in (0, 1)")
    keep = rng.generator.random(n) < mu
    return np.flatnonzero(keep)


@dataclass(frozen=True)
class ZeroedSpec:
    """Shape and law of the zeroed-out matrix: both diagonal blocks are zero
    and the off-diagonal (n-d) x d block has i.i.d. entries distributed as the
    difference of two independent base draws, thinned by a Bernoulli(nu)."""

    n: int
    d: int
    nu: float
    base: DistributionSpec

    def __post_init__(self) -> None:
        if self.d < 1 or 3 * self.d > self.n:
            raise ValueError("need 1 <= d and 3*d <= n")
        if not 0.0 < self.nu < 1.0:
            raise ValueError("nu must lie in (0, 1)")


def sample_sparse_block(
    base: DistributionSpec, nu: float, rows: int, cols: int, rng: RngHandle
) -> np.ndarray:
    """rows x cols i.i.d. entries of law (zeta - zeta') * Bernoulli(nu)."""
    size = rows * cols
    z1 = base.sample(rng, size)
    z2 = base.sample(rng, size)
    keep = rng.generator.random(size) < nu
    return ((z1 - z2) * keep).reshape(rows, cols)


def sample_zeroed_matrix(spec: ZeroedSpec, rng: RngHandle) -> SymmetricMatrix:
    """The zeroed-out symmetric matrix: only the off-diagonal block (and its
    mirror) can be nonzero — at most 2*d*(n-d) entries."""
    h1 = sample_sparse_block(spec.base, spec.nu, spec.n - spec.d, spec.d, rng)
    m = np.zeros((spec.n, spec.n))
    m[spec.d :, : spec.d] = h1
    m[: spec.d, spec.d :] = h1.T
    return SymmetricMatrix(spec.n, m[np.tril_indices(spec.n)].copy())


def zeroed_pair_image(h1: np.ndarray, v: np.ndarray, w: np.ndarray) -> float:
    """||(M v, M w)||_2 for the zeroed-out matrix with off-diagonal block h1,
    computed without forming the full matrix."""
    d = h1.shape[1]
    mv = np.concatenate([h1.T @ v[d:], h1 @ v[:d]])
    mw = np.concatenate([h1.T @ w[d:], h1 @ w[:d]])
    return float(math.hypot(np.linalg.norm(mv), np.linalg.norm(mw)))


def _band(scale: int, kappa: float) -> np.ndarray:
    lo, hi = scale, int(math.floor(kappa * scale))
    side = np.arange(lo, hi + 1)
    return np.concatenate([-side[::-1], side])


@dataclass(frozen=True)
class BoxPairSpec:
    """Two integer product boxes sharing a coordinate layout.

    Coordinates in ``d1`` (first box) / ``d2`` (second box) use the two-sided
    band [-kappa*N, -N] u [N, kappa*N] at that box's scale; every other
    coordinate defaults to the symmetric interval [-N, N] (first box) or
    [-N1, N1] (second box).  ``d3`` names the remaining "bounded" coordinates;
    explicit per-coordinate overrides are allowed there (and anywhere outside
    the box's band set), subject to the size floor (>= N, resp. >= N1) and the
    magnitude cap (<= kappa_prime*N, resp. kappa_prime*N1).
    """

    n: int
    big_n: int
    big_n1: int
    kappa: float
    kappa_prime: float
    d1: tuple[int, ...] = ()
    d2: tuple[int, ...] = ()
    d3: tuple[int, ...] = ()
    sets_box1: Mapping[int, tuple[int, ...]] = field(default_factory=dict)
    sets_box2: Mapping[int, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.big_n >= self.big_n1 >= 2:
            raise ValueError("need N >= N1 >= 2")
        if self.kappa < 2 or self.kappa_prime < self.kappa:
            raise ValueError("need kappa >= 2 and kappa_prime >= kappa")
        groups = [tuple(sorted(int(i) for i in g)) for g in (self.d1, self.d2, self.d3)]
        flat = [i for g in groups for i in g]
        if len(set(flat)) != len(flat):
            raise ValueError("d1, d2, d3 must be disjoint")
        if flat and (min(flat) < 0 or max(flat) >= self.n):
            raise ValueError("index sets out of range")
        object.__setattr__(self, "d1", groups[0])
        object.__setattr__(self, "d2", groups[1])
        object.__setattr__(self, "d3", groups[2])
        for box, overrides, special, scale in (
            (1, self.sets_box1, self.d1, self.big_n),
            (2, self.sets_box2, self.d2, self.big_n1),
        ):
            for i, vals in overrides.items():
                if i in special:
                    raise ValueError(
                        f"coordinate {i} of box {box} is fixed to its band set"
                    )
                vals = tuple(int(v) for v in vals)
                if len(set(vals)) < scale:
                    raise ValueError(
                        f"coordinate set for box {box} at {i} smaller than {scale}"
                    )
                if max(abs(v) for v in vals) > self.kappa_prime * scale:
                    raise ValueError(
                        f"coordinate set for box {box} at {i} exceeds the magnitude cap"
                    )

    def coordinate_values(self, box: int, i: int) -> np.ndarray:
        """The allowed integers for coordinate i of the given box (1 or 2)."""
        if box == 1:
            if i in self.d1:
                return _band(self.big_n, self.kappa)
            if i in self.sets_box1:
                return np.asarray(sorted(set(self.sets_box1[i])), dtype=np.int64)
            return np.arange(-self.big_n, self.big_n + 1)
        if box == 2:
            if i in self.d2:
                return _band(self.big_n1, self.kappa)
            if i in self.sets_box2:
                return np.asarray(sorted(set(self.sets_box2[i])), dtype=np.int64)
            return np.arange(-self.big_n1, self.big_n1 + 1)
        raise ValueError("box must be 1 or 2")


def sample_box_vector_pair(
    spec: BoxPairSpec, rng: RngHandle
) -> tuple[np.ndarray, np.ndarray]:
    """Independent uniform draws from the two boxes, coordinate by coordinate."""
    g = rng.generator
    out = []
    for box in (1, 2):
        vec = np.empty(spec.n, dtype=np.int64)
        for i in range(spec.n):
            values = spec.coordinate_values(box, i)
            if values.size == 0:
                raise ValueError(f"empty coordinate set for box {box} at {i}")
            vec[i] = values[int(g.integers(0, values.size))]
        out.append(vec)
    return out[0], out[1]
