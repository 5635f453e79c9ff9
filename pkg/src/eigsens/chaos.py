"""Exact and Monte Carlo variance decomposition over resampling order.

For a function f of n independent coordinates, the variance splits as
Var f = 1/2 * sum_i B_i, where B_i is the expected product of a
single-coordinate resampling increment and the i-th increment of a
cumulative resampling in uniformly random order:

    B_i = E[(f(X) - f(X^(sigma(i)))) (f(X^sigma([i-1])) - f(X^sigma([i])))],

with X' an independent copy supplying all replacements and sigma a
uniform permutation.  The terms are nonincreasing in i and nonnegative,
hence B_k <= 2 Var(f)/k.  A second family B'_i resamples one uniformly
chosen coordinate j with a third independent copy X'' (overwriting X'_j
when j was already replaced) and satisfies
B'_k <= (2 Var(f)/k) * (n+1)/n.

Exact mode enumerates finite-support coordinates; B_i depends on sigma
only through the pair (sigma([i-1]), sigma(i)), so the n! permutations
collapse to averages over (subset, pivot) pairs.  Monte Carlo mode gives
unbiased estimates with standard errors for black-box coordinates,
sharing (X, X', X'', sigma, j) across all requested i within a trial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, InvariantViolation, SizeBudgetError
from .rng import SeedContext

#: Hard cap on assignments enumerated by variance_exact.
VARIANCE_ENUM_BUDGET = 10**7

#: Hard cap on the decomposition enumeration budget
#: sum_i C(n, i-1) * n * |support|^(3n).
DECOMP_ENUM_BUDGET = 10**8

_PROB_TOL = 1e-12
EXACT_TOL = 1e-10


@dataclass(frozen=True)
class BlackBoxFunction:
    """A deterministic real function of an n-coordinate assignment."""

    arity: int
    evaluator: Callable[[np.ndarray], float]

    def __call__(self, assignment: np.ndarray) -> float:
        return float(self.evaluator(assignment))


class ProductSpace:
    """A product of n independent coordinate laws.

    Finite mode stores per-coordinate (values, probabilities) supports
    and allows exact enumeration; sampler mode stores a vector sampler
    drawing one full coordinate assignment.  Finite spaces can also be
    sampled, so one space serves both exact and Monte Carlo paths.
    """

    __slots__ = ("n", "supports", "_draw")

    def __init__(self, n, supports=None, draw=None):
        if n < 1:
            raise DomainError(f"need n >= 1 coordinates, got {n}")
        if (supports is None) == (draw is None):
            raise DomainError("exactly one of supports/draw must be given")
        if supports is not None:
            if len(supports) != n:
                raise DomainError(f"{len(supports)} supports for n={n} coordinates")
            cleaned = []
            for t, (values, probs) in enumerate(supports):
                values = np.asarray(values, dtype=np.float64)
                probs = np.asarray(probs, dtype=np.float64)
                if values.ndim != 1 or values.shape != probs.shape or not len(values):
                    raise DomainError(f"coordinate {t}: malformed support")
                if np.any(probs < 0) or abs(probs.sum() - 1.0) > _PROB_TOL:
                    raise DomainError(f"coordinate {t}: probabilities must sum to 1")
                values.flags.writeable = False
                probs.flags.writeable = False
                cleaned.append((values, probs))
            supports = tuple(cleaned)
        self.n = int(n)
        self.supports = supports
        self._draw = draw

    @property
    def is_finite(self) -> bool:
        return self.supports is not None

    @classmethod
    def finite(cls, supports) -> "ProductSpace":
        return cls(len(supports), supports=supports)

    @classmethod
    def iid_finite(cls, n: int, values, probs) -> "ProductSpace":
        return cls(n, supports=[(values, probs)] * n)

    @classmethod
    def iid_rademacher(cls, n: int) -> "ProductSpace":
        return cls.iid_finite(n, [-1.0, 1.0], [0.5, 0.5])

    @classmethod
    def from_sampler(cls, n: int, draw: Callable[[np.random.Generator], np.ndarray]) -> "ProductSpace":
        """Sampler mode; ``draw(rng)`` must return one length-n assignment."""
        return cls(n, draw=draw)

    @classmethod
    def iid_gaussian(cls, n: int) -> "ProductSpace":
        return cls.from_sampler(n, lambda rng: rng.standard_normal(n))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if self._draw is not None:
            x = np.asarray(self._draw(rng), dtype=np.float64)
            if x.shape != (self.n,):
                raise DomainError(f"sampler returned shape {x.shape}, expected ({self.n},)")
            return x
        u = rng.random(self.n)
        out = np.empty(self.n)
        for t, (values, probs) in enumerate(self.supports):
            out[t] = values[np.searchsorted(np.cumsum(probs), u[t])]
        return out

    def _require_finite(self, op: str):
        if not self.is_finite:
            raise DomainError(f"{op} requires a finite-support space")


@dataclass(frozen=True)
class DecompositionTerms:
    """Decomposition terms B_i (and optionally B'_i) for the requested
    1-based indices, with standard errors in Monte Carlo mode."""

    mode: str
    n: int
    indices: tuple
    terms: np.ndarray
    terms_prime: Optional[np.ndarray]
    variance: float
    stderr: Optional[np.ndarray] = None
    stderr_prime: Optional[np.ndarray] = None
    variance_stderr: Optional[float] = None
    trials: Optional[int] = None

    def term(self, i: int) -> float:
        return float(self.terms[self.indices.index(i)])


class _Enumeration:
    """Mixed-radix enumeration of a finite product space.

    Assignment m has digit D[m, t] for coordinate t with place value
    pl[t]; replacing the coordinates in a set T of assignment x by those
    of assignment y maps to the index arithmetic
    x - part_T(x) + part_T(y), with part_T(x) = sum_{t in T} D[x, t] pl[t].
    """

    def __init__(self, space: ProductSpace):
        space._require_finite("exact enumeration")
        self.n = space.n
        sizes = [len(v) for v, _ in space.supports]
        self.sizes = sizes
        pl = np.ones(self.n, dtype=np.int64)
        for t in range(1, self.n):
            pl[t] = pl[t - 1] * sizes[t - 1]
        self.pl = pl
        self.m_total = int(pl[-1] * sizes[-1])
        idx = np.arange(self.m_total, dtype=np.int64)
        self.digits = (idx[:, None] // pl[None, :]) % np.asarray(sizes, dtype=np.int64)[None, :]
        # part contribution of each single coordinate, shape (n, M)
        self.single = (self.digits * pl[None, :]).T.copy()
        weight = np.ones(self.m_total)
        for t, (_, probs) in enumerate(space.supports):
            weight *= probs[self.digits[:, t]]
        self.weight = weight
        self.space = space

    def f_table(self, f: BlackBoxFunction) -> np.ndarray:
        values = [v for v, _ in self.space.supports]
        out = np.empty(self.m_total)
        assignment = np.empty(self.n)
        for m in range(self.m_total):
            for t in range(self.n):
                assignment[t] = values[t][self.digits[m, t]]
            out[m] = f(assignment)
        return out

    def part(self, coords) -> np.ndarray:
        if not len(coords):
            return np.zeros(self.m_total, dtype=np.int64)
        return self.single[list(coords)].sum(axis=0)


def _check_arity(f: BlackBoxFunction, space: ProductSpace):
    if f.arity != space.n:
        raise DomainError(f"function arity {f.arity} != space dimension {space.n}")


def variance_exact(f: BlackBoxFunction, space: ProductSpace) -> float:
    """Exact Var f(X) by full enumeration with probability weights.

    Streams assignments in bounded chunks, so memory stays flat even at
    the full enumeration budget."""
    _check_arity(f, space)
    space._require_finite("variance_exact")
    n = space.n
    sizes = [len(values) for values, _ in space.supports]
    m_total = 1
    for size in sizes:
        m_total *= size
        if m_total > VARIANCE_ENUM_BUDGET:
            raise SizeBudgetError(
                f"enumeration needs > {VARIANCE_ENUM_BUDGET} assignments"
            )
    values = [v for v, _ in space.supports]
    probs = [p for _, p in space.supports]
    moment1 = moment2 = 0.0
    shift = None
    assignment = np.empty(n)
    chunk = 1 << 16
    for start in range(0, m_total, chunk):
        idx = np.arange(start, min(start + chunk, m_total))
        digits = np.empty((len(idx), n), dtype=np.int64)
        rem = idx
        for t in range(n):
            digits[:, t] = rem % sizes[t]
            rem = rem // sizes[t]
        weight = np.ones(len(idx))
        for t in range(n):
            weight *= probs[t][digits[:, t]]
        for row in range(len(idx)):
            for t in range(n):
                assignment[t] = values[t][digits[row, t]]
            fx = f(assignment)
            if shift is None:
                # centering near a function value guards the one-pass
                # moment difference against cancellation
                shift = fx
            fx -= shift
            moment1 += weight[row] * fx
            moment2 += weight[row] * fx * fx
    return float(moment2 - moment1 * moment1)


def _decomp_budget(n: int, m_total: int) -> int:
    return (2**n - 1) * n * m_total**3


def decomposition_exact(
    f: BlackBoxFunction, space: ProductSpace, want_prime: bool = True
) -> DecompositionTerms:
    """Exact B_i for i = 1..n (and B'_i) by subset-pivot enumeration.

    Averages over the pair (A, j) with A the resampled prefix set and j
    the pivot coordinate, which matches the permutation average because
    B_i depends on sigma only through (sigma([i-1]), sigma(i)).
    """
    _check_arity(f, space)
    space._require_finite("decomposition_exact")
    n = space.n
    m_total = 1
    for values, _ in space.supports:
        m_total *= len(values)
    if _decomp_budget(n, m_total) > DECOMP_ENUM_BUDGET:
        raise SizeBudgetError(
            f"decomposition budget {_decomp_budget(n, m_total):.2e} exceeds "
            f"{DECOMP_ENUM_BUDGET:.0e}"
        )
    enum = _Enumeration(space)
    table = enum.f_table(f)
    w = enum.weight
    idx = np.arange(enum.m_total, dtype=np.int64)

    terms = np.zeros(n)
    terms_prime = np.zeros(n) if want_prime else None

    for i in range(1, n + 1):
        vals = []
        vals_prime = []
        for j in range(n):
            pj = enum.single[j]
            f_x = table
            # first factor of B_i: swap coordinate j between x and x'
            swap_j = table[(idx - pj)[:, None] + pj[None, :]]
            t1 = f_x[:, None] - swap_j
            for subset in combinations([t for t in range(n) if t != j], i - 1):
                part_a = enum.part(subset)
                rest_a = idx - part_a
                f_a = table[rest_a[:, None] + part_a[None, :]]
                f_aj = table[(rest_a - pj)[:, None] + (part_a + pj)[None, :]]
                vals.append(w @ ((t1 * (f_a - f_aj)) @ w))
            if want_prime:
                # third copy acts on coordinate j only
                values_j, probs_j = space.supports[j]
                for subset in combinations(range(n), i - 1):
                    part_a = enum.part(subset)
                    rest_a = idx - part_a
                    f_a = table[rest_a[:, None] + part_a[None, :]]
                    in_a = j in subset
                    base_x = rest_a - (0 if in_a else pj)
                    base_xp = part_a - (pj if in_a else 0)
                    acc = 0.0
                    for d, prob_d in enumerate(probs_j):
                        off = d * enum.pl[j]
                        t1p = f_x - table[idx - pj + off]
                        f_ajpp = table[(base_x + off)[:, None] + base_xp[None, :]]
                        acc += prob_d * (w @ ((t1p[:, None] * (f_a - f_ajpp)) @ w))
                    vals_prime.append(acc)
        terms[i - 1] = float(np.mean(vals))
        if want_prime:
            terms_prime[i - 1] = float(np.mean(vals_prime))

    return DecompositionTerms(
        mode="exact",
        n=n,
        indices=tuple(range(1, n + 1)),
        terms=terms,
        terms_prime=terms_prime,
        variance=variance_exact(f, space),
    )


def decomposition_mc(
    f: BlackBoxFunction,
    space: ProductSpace,
    i_list: Sequence[int],
    trials: int,
    seed: SeedContext,
    want_prime: bool = True,
) -> DecompositionTerms:
    """Unbiased Monte Carlo estimates of B_i (and B'_i) with standard
    errors.  Each trial draws (X, X', X'', sigma, j) fresh and reuses
    them for every requested i (common random numbers)."""
    _check_arity(f, space)
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    n = space.n
    i_list = tuple(sorted(set(int(i) for i in i_list)))
    if not i_list or i_list[0] < 1 or i_list[-1] > n:
        raise DomainError(f"i_list must be within 1..{n}, got {i_list}")

    sums = np.zeros(len(i_list))
    sums_sq = np.zeros(len(i_list))
    sums_p = np.zeros(len(i_list))
    sums_p_sq = np.zeros(len(i_list))
    f_samples = np.empty(trials)

    needed = sorted({i - 1 for i in i_list} | set(i_list))
    for t in range(trials):
        rng = seed.child(t).generator()
        x = space.sample(rng)
        xp = space.sample(rng)
        xpp = space.sample(rng)
        perm = rng.permutation(n)
        j = int(rng.integers(n))

        f_x = f(x)
        f_samples[t] = f_x
        y = x.copy()
        y[j] = xpp[j]
        f_xj = f(y)

        prefix_f = {0: f_x}
        prefix_fj = {}
        cur = x.copy()
        for ell in range(0, needed[-1] + 1):
            if ell > 0:
                cur[perm[ell - 1]] = xp[perm[ell - 1]]
                if ell in needed:
                    prefix_f[ell] = f(cur)
            if want_prime and ell + 1 in i_list:
                h = cur.copy()
                h[j] = xpp[j]
                prefix_fj[ell] = f(h)

        for m, i in enumerate(i_list):
            y = x.copy()
            y[perm[i - 1]] = xp[perm[i - 1]]
            est = (f_x - f(y)) * (prefix_f[i - 1] - prefix_f[i])
            sums[m] += est
            sums_sq[m] += est * est
            if want_prime:
                est_p = (f_x - f_xj) * (prefix_f[i - 1] - prefix_fj[i - 1])
                sums_p[m] += est_p
                sums_p_sq[m] += est_p * est_p

    def _mean_se(s, ssq):
        mean = s / trials
        var = np.maximum(ssq / trials - mean**2, 0.0)
        se = np.sqrt(var / max(trials - 1, 1))
        return mean, se

    terms, stderr = _mean_se(sums, sums_sq)
    terms_prime, stderr_prime = (None, None)
    if want_prime:
        terms_prime, stderr_prime = _mean_se(sums_p, sums_p_sq)

    f_var = float(np.var(f_samples, ddof=1)) if trials > 1 else 0.0
    centered = f_samples - f_samples.mean()
    m4 = float(np.mean(centered**4))
    var_se = math.sqrt(max(m4 - f_var**2, 0.0) / trials)

    return DecompositionTerms(
        mode="monte_carlo",
        n=n,
        indices=i_list,
        terms=terms,
        terms_prime=terms_prime,
        variance=f_var,
        stderr=stderr,
        stderr_prime=stderr_prime,
        variance_stderr=var_se,
        trials=trials,
    )


@dataclass(frozen=True)
class BoundsReport:
    """Outcome of the decomposition-term bound checks.

    Margins are absolute in exact mode.  In Monte Carlo mode each margin
    is divided by the combined standard error of its comparison, and a
    check 'holds' when its worst margin is above -4 (SE units).
    """

    mode: str
    variance: float
    identity_error: Optional[float]
    chain_margin: float
    tail_margin: Optional[float]
    bound_margin: float
    bound_prime_margin: Optional[float]
    holds: bool


def check_bounds(terms: DecompositionTerms, var: Optional[float] = None) -> BoundsReport:
    """Verify the monotone chain and the 2 Var/k bounds.

    Exact mode raises :class:`InvariantViolation` on any failure beyond
    the 1e-10 tolerance; Monte Carlo mode only reports, with margins in
    standard-error units.
    """
    variance = terms.variance if var is None else float(var)
    exact = terms.mode == "exact"
    n = terms.n
    b = terms.terms
    idx = terms.indices

    se = terms.stderr if terms.stderr is not None else np.zeros_like(b)
    se_p = terms.stderr_prime

    def _scaled(margin, combined_se):
        if exact:
            return margin
        return margin / combined_se if combined_se > 0 else math.copysign(math.inf, margin) if margin else 0.0

    chain = math.inf
    for m in range(len(idx) - 1):
        if idx[m + 1] == idx[m] + 1:
            chain = min(chain, _scaled(b[m] - b[m + 1], math.hypot(se[m], se[m + 1])))

    tail = None
    if idx[-1] == n:
        tail = _scaled(b[-1], se[-1])

    bound = math.inf
    for m, i in enumerate(idx):
        bound = min(bound, _scaled(2 * variance / i - b[m], se[m]))

    bound_p = None
    if terms.terms_prime is not None:
        bound_p = math.inf
        bp = terms.terms_prime
        sep = se_p if se_p is not None else np.zeros_like(bp)
        for m, i in enumerate(idx):
            limit = (2 * variance / i) * (n + 1) / n
            bound_p = min(bound_p, _scaled(limit - bp[m], sep[m]))

    identity = None
    if exact and idx == tuple(range(1, n + 1)):
        identity = abs(variance - 0.5 * float(np.sum(b)))

    slack = EXACT_TOL if exact else 4.0
    checks = {
        "variance identity": (identity is None) or identity <= EXACT_TOL,
        "monotone chain": chain == math.inf or chain >= -slack,
        "tail nonnegativity": tail is None or tail >= -slack,
        "2Var/k bound": bound == math.inf or bound >= -slack,
        "(n+1)/n prime bound": bound_p is None or bound_p >= -slack,
    }
    holds = all(checks.values())
    if exact and not holds:
        failed = ", ".join(name for name, ok in checks.items() if not ok)
        raise InvariantViolation(f"decomposition bound check failed: {failed}")

    return BoundsReport(
        mode=terms.mode,
        variance=variance,
        identity_error=identity,
        chain_margin=chain,
        tail_margin=tail,
        bound_margin=bound,
        bound_prime_margin=bound_p,
        holds=holds,
    )


def random_table_function(n: int, rng: np.random.Generator) -> BlackBoxFunction:
    """Random real function of n binary (+-1) coordinates, backed by a
    lookup table of 2**n independent normal values.  The workhorse of
    the randomized bound-check corpus."""
    table = rng.standard_normal(2**n)

    def evaluate(x: np.ndarray) -> float:
        idx = 0
        for t in range(n):
            if x[t] > 0:
                idx |= 1 << t
        return float(table[idx])

    return BlackBoxFunction(n, evaluate)


def eigenvalue_adapter(N: int, spec) -> tuple[ProductSpace, BlackBoxFunction]:
    """Top eigenvalue as a black-box function of the N(N+1)/2 independent
    upper-triangle entries, with the matching coordinate space.

    Intended for Monte Carlo decomposition at small N: each evaluation
    is one dense symmetric eigensolve.
    """
    from .ensemble import EntrySpec, _triangle_layout, draw_unit_entries, pair_count

    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    if not isinstance(spec, EntrySpec):
        raise DomainError("spec must be an EntrySpec")
    n = pair_count(N)
    offs, rows, cols, diag_idx = _triangle_layout(N)

    def draw(rng: np.random.Generator) -> np.ndarray:
        u = draw_unit_entries(spec.offdiag_dist, rng, n)
        u[diag_idx] *= spec.diag_sigma0
        return u

    def top_eigenvalue(assignment: np.ndarray) -> float:
        a = np.zeros((N, N))
        a[rows, cols] = assignment
        a[cols, rows] = assignment
        return float(np.linalg.eigvalsh(a)[-1])

    return ProductSpace.from_sampler(n, draw), BlackBoxFunction(n, top_eigenvalue)
