"""Random symmetric matrix ensembles and the entry-resampling coupling.

A matrix here is real symmetric with independent centered entries above
and including the diagonal: off-diagonal entries have variance exactly 1,
diagonal entries variance sigma0**2.  All supported entry laws are
sub-exponential.  The resampling coupling replaces a uniformly chosen set
of upper-triangle positions (and their mirror images) with fresh
independent draws, leaving every other entry bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, DomainError
from .rng import SeedContext

#: Supported entry laws.  Each has mean 0 and variance exactly 1.
ENTRY_DISTRIBUTIONS = (
    "rademacher",
    "gaussian",
    "uniform_scaled",
    "symmetrized_exponential",
)

#: Default diagonal standard deviation (the "standard" normalization
#: in which diagonal entries have variance 2).
DEFAULT_DIAG_SIGMA0 = math.sqrt(2.0)

_SQRT3 = math.sqrt(3.0)
_LAPLACE_SCALE = 1.0 / math.sqrt(2.0)  # Var of Laplace(0, b) is 2 b^2


@dataclass(frozen=True)
class EntrySpec:
    """Entry-law configuration for one ensemble.

    ``offdiag_dist`` names a unit-variance law; diagonal entries are the
    same law scaled to standard deviation ``diag_sigma0``.  ``tail_delta``
    records the sub-exponential tail exponent; it is informational and not
    enforced beyond the supported families.
    """

    offdiag_dist: str = "gaussian"
    diag_sigma0: float = DEFAULT_DIAG_SIGMA0
    tail_delta: float = 1.0

    def __post_init__(self):
        if self.offdiag_dist not in ENTRY_DISTRIBUTIONS:
            raise ConfigError(
                f"unsupported entry distribution {self.offdiag_dist!r}; "
                f"expected one of {', '.join(ENTRY_DISTRIBUTIONS)}"
            )
        if not self.diag_sigma0 >= 0.0:
            raise ConfigError(f"diag_sigma0 must be >= 0, got {self.diag_sigma0}")
        if not self.tail_delta > 0.0:
            raise ConfigError(f"tail_delta must be > 0, got {self.tail_delta}")


def draw_unit_entries(dist: str, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` iid values from a mean-0, variance-1 entry law.

    Draws are consumed sequentially, so for a fixed generator state the
    first j values of a size-k draw equal a size-j draw.  The nested
    resampling coupling in the experiments module relies on this.
    """
    if dist == "rademacher":
        return (2.0 * rng.integers(0, 2, size=size) - 1.0).astype(np.float64)
    if dist == "gaussian":
        return rng.standard_normal(size)
    if dist == "uniform_scaled":
        return rng.uniform(-_SQRT3, _SQRT3, size=size)
    if dist == "symmetrized_exponential":
        return rng.laplace(0.0, _LAPLACE_SCALE, size=size)
    raise ConfigError(f"unsupported entry distribution {dist!r}")


@lru_cache(maxsize=32)
def _triangle_layout(dim: int):
    """Row-major upper-triangle layout helpers for dimension ``dim``.

    Returns (row_offsets, rows, cols, diag_idx) where ``row_offsets[i]``
    is the linear index of entry (i, i) and rows/cols invert the layout.
    """
    offs = np.zeros(dim + 1, dtype=np.int64)
    for i in range(dim):
        offs[i + 1] = offs[i] + (dim - i)
    rows_list, cols_list = np.triu_indices(dim)
    return offs, rows_list.astype(np.int64), cols_list.astype(np.int64), offs[:-1].copy()


def pair_count(dim: int) -> int:
    """Number of ordered upper-triangle positions, dim*(dim+1)/2."""
    return dim * (dim + 1) // 2


def pair_to_linear(dim: int, i, j):
    """Linear index of upper-triangle position (i, j), i <= j, 0-based."""
    offs = _triangle_layout(dim)[0]
    return offs[i] + (np.asarray(j) - np.asarray(i))


class SymmetricMatrix:
    """Dense real symmetric matrix stored by its upper triangle.

    Storage is row-major over positions (i, j) with 0 <= i <= j < dim, so
    the logical matrix cannot be asymmetric.  Instances are immutable:
    the backing array is write-protected at construction.
    """

    __slots__ = ("dim", "upper", "_dense")

    def __init__(self, dim: int, upper: np.ndarray):
        if dim < 1:
            raise DomainError(f"matrix dimension must be >= 1, got {dim}")
        upper = np.ascontiguousarray(upper, dtype=np.float64)
        if upper.shape != (pair_count(dim),):
            raise DomainError(
                f"upper triangle of a {dim}x{dim} matrix needs "
                f"{pair_count(dim)} entries, got shape {upper.shape}"
            )
        upper.flags.writeable = False
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "_dense", None)

    def __setattr__(self, name, value):
        raise AttributeError("SymmetricMatrix is immutable")

    @classmethod
    def from_dense(cls, a: np.ndarray) -> "SymmetricMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DomainError(f"expected a square matrix, got shape {a.shape}")
        if not np.array_equal(a, a.T):
            raise DomainError("matrix is not symmetric")
        dim = a.shape[0]
        _, rows, cols, _ = _triangle_layout(dim)
        return cls(dim, a[rows, cols])

    def entry(self, i: int, j: int) -> float:
        """Logical entry (i, j); symmetric lookup, 0-based."""
        if not (0 <= i < self.dim and 0 <= j < self.dim):
            raise DomainError(f"index ({i}, {j}) out of range for dim {self.dim}")
        if i > j:
            i, j = j, i
        return float(self.upper[pair_to_linear(self.dim, i, j)])

    def to_dense(self) -> np.ndarray:
        """Full dim x dim array (cached, read-only)."""
        if self._dense is None:
            n = self.dim
            _, rows, cols, _ = _triangle_layout(n)
            a = np.zeros((n, n))
            a[rows, cols] = self.upper
            a[cols, rows] = self.upper
            a.flags.writeable = False
            object.__setattr__(self, "_dense", a)
        return self._dense

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.to_dense() @ x

    def with_entries(self, pairs, values) -> "SymmetricMatrix":
        """New matrix with the given upper-triangle positions replaced."""
        values = np.asarray(values, dtype=np.float64)
        upper = self.upper.copy()
        if len(pairs):
            ii = np.asarray([p[0] for p in pairs], dtype=np.int64)
            jj = np.asarray([p[1] for p in pairs], dtype=np.int64)
            if np.any(ii > jj) or np.any(ii < 0) or np.any(jj >= self.dim):
                raise DomainError("pairs must satisfy 0 <= i <= j < dim")
            upper[pair_to_linear(self.dim, ii, jj)] = values
        return SymmetricMatrix(self.dim, upper)

    def same_entries(self, other: "SymmetricMatrix") -> bool:
        return self.dim == other.dim and np.array_equal(self.upper, other.upper)

    def __repr__(self):
        return f"SymmetricMatrix(dim={self.dim})"


@dataclass(frozen=True)
class IndexPairSet:
    """An ordered set of k distinct upper-triangle positions of an N x N
    matrix, drawn uniformly without replacement.

    The order records the sampling sequence: prefixes of one draw are
    themselves exact uniform without-replacement samples, which is what
    makes nested resampling couplings cheap.
    """

    dim: int
    pairs: tuple

    def __post_init__(self):
        n_max = pair_count(self.dim)
        if len(self.pairs) > n_max:
            raise DomainError(
                f"{len(self.pairs)} pairs requested but a {self.dim}x{self.dim} "
                f"matrix has only {n_max} upper-triangle positions"
            )
        for i, j in self.pairs:
            if not (0 <= i <= j < self.dim):
                raise DomainError(f"pair ({i}, {j}) out of range for dim {self.dim}")
        if len(set(self.pairs)) != len(self.pairs):
            raise DomainError("pairs must be distinct")

    @property
    def k(self) -> int:
        return len(self.pairs)

    def prefix(self, k: int) -> "IndexPairSet":
        """First k sampled pairs (nested subset of this set)."""
        if not 0 <= k <= self.k:
            raise DomainError(f"prefix length {k} out of range 0..{self.k}")
        return IndexPairSet(self.dim, self.pairs[:k])

    def linear_indices(self) -> np.ndarray:
        if not self.pairs:
            return np.zeros(0, dtype=np.int64)
        ii = np.asarray([p[0] for p in self.pairs], dtype=np.int64)
        jj = np.asarray([p[1] for p in self.pairs], dtype=np.int64)
        return pair_to_linear(self.dim, ii, jj)


def _uniform_prefix(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """First k entries of a uniform random permutation of range(n).

    Partial Fisher-Yates over an implicit identity array: O(k) memory.
    Falls back to a full permutation when k is a large fraction of n,
    which is faster in numpy.
    """
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    if 3 * k >= n:
        return rng.permutation(n)[:k].astype(np.int64)
    swapped: dict[int, int] = {}
    out = np.empty(k, dtype=np.int64)
    for t in range(k):
        r = int(rng.integers(t, n))
        out[t] = swapped.get(r, r)
        swapped[r] = swapped.get(t, t)
    return out


def sample_wigner(N: int, spec: EntrySpec, seed: SeedContext) -> SymmetricMatrix:
    """Sample an N x N ensemble matrix.

    Upper-triangle entries are independent: off-diagonal from
    ``spec.offdiag_dist`` (variance 1), diagonal scaled to variance
    ``spec.diag_sigma0**2``.
    """
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    rng = seed.generator()
    upper = draw_unit_entries(spec.offdiag_dist, rng, pair_count(N))
    diag_idx = _triangle_layout(N)[3]
    upper[diag_idx] = spec.diag_sigma0 * draw_unit_entries(spec.offdiag_dist, rng, N)
    return SymmetricMatrix(N, upper)


def sample_pair_set(N: int, k: int, seed: SeedContext) -> IndexPairSet:
    """Draw k distinct upper-triangle positions uniformly without
    replacement from the N(N+1)/2 available ones."""
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    n_max = pair_count(N)
    if not 0 <= k <= n_max:
        raise DomainError(f"k={k} out of range 0..{n_max} for N={N}")
    lin = _uniform_prefix(seed.generator(), n_max, k)
    offs, rows, cols, _ = _triangle_layout(N)
    return IndexPairSet(N, tuple((int(rows[m]), int(cols[m])) for m in lin))


def draw_replacement_values(
    spec: EntrySpec, rng: np.random.Generator, pairs
) -> np.ndarray:
    """Fresh entry draws for the given positions, in order.

    Diagonal positions are scaled by sigma0.  Sequential consumption
    means prefixes of one call coincide with shorter calls on the same
    pair-list prefix (same generator state).
    """
    k = len(pairs)
    values = draw_unit_entries(spec.offdiag_dist, rng, k)
    if k:
        diag_mask = np.asarray([i == j for i, j in pairs])
        if diag_mask.any():
            values = values.copy()
            values[diag_mask] *= spec.diag_sigma0
    return values


def apply_resample(
    X: SymmetricMatrix, S: IndexPairSet, spec: EntrySpec, seed: SeedContext
) -> SymmetricMatrix:
    """Resampling coupling: replace the entries of X at the positions in
    S (and their mirror images) by fresh independent draws.

    The input matrix is untouched; every position outside S is
    bit-identical in the result.
    """
    if S.dim != X.dim:
        raise DomainError(f"pair set dim {S.dim} != matrix dim {X.dim}")
    values = draw_replacement_values(spec, seed.generator(), S.pairs)
    return X.with_entries(S.pairs, values)


def resample_single(
    X: SymmetricMatrix, i: int, j: int, spec: EntrySpec, seed: SeedContext
) -> SymmetricMatrix:
    """Replace the single entry (i, j) (and (j, i)) by a fresh draw."""
    if not (0 <= i <= j < X.dim):
        raise DomainError(f"need 0 <= i <= j < {X.dim}, got ({i}, {j})")
    return apply_resample(X, IndexPairSet(X.dim, ((i, j),)), spec, seed)
