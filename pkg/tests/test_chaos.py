import math
from itertools import combinations, permutations, product

import numpy as np
import pytest

from eigsens import (
    BlackBoxFunction,
    DomainError,
    EntrySpec,
    InvariantViolation,
    ProductSpace,
    SeedContext,
    SizeBudgetError,
    check_bounds,
    decomposition_exact,
    decomposition_mc,
    eigenvalue_adapter,
    variance_exact,
)
from eigsens.chaos import DecompositionTerms, random_table_function

RADEMACHER = (-1.0, 1.0)


# --- independent oracles -------------------------------------------------
#
# These enumerate the decomposition terms directly from their defining
# expectations, without the subset-pivot reduction used by the library.


def sigma_form_terms(f, n):
    """B_i averaged explicitly over all n! permutations and all (x, x')
    assignments of iid Rademacher coordinates."""
    out = []
    scale = 1.0 / (2**n) ** 2
    for i in range(1, n + 1):
        total = 0.0
        for sigma in permutations(range(n)):
            acc = 0.0
            for x_tup in product(RADEMACHER, repeat=n):
                for xp_tup in product(RADEMACHER, repeat=n):
                    x = np.asarray(x_tup)
                    xp = np.asarray(xp_tup)
                    swapped = x.copy()
                    swapped[sigma[i - 1]] = xp[sigma[i - 1]]
                    prefix = x.copy()
                    for ell in range(i - 1):
                        prefix[sigma[ell]] = xp[sigma[ell]]
                    prefix_i = prefix.copy()
                    prefix_i[sigma[i - 1]] = xp[sigma[i - 1]]
                    acc += (f(x) - f(swapped)) * (f(prefix) - f(prefix_i))
            total += acc * scale
        out.append(total / math.factorial(n))
    return np.asarray(out)


def triple_enumeration_terms(f, n):
    """(B_i, B'_i) for iid Rademacher coordinates by brute enumeration
    over all (x, x', x'') triples and all (subset, pivot) choices."""
    triples = list(product(product(RADEMACHER, repeat=n), repeat=3))
    weight = 1.0 / len(triples)
    b = np.zeros(n)
    b_prime = np.zeros(n)
    for i in range(1, n + 1):
        vals, vals_p = [], []
        for j in range(n):
            for subset in combinations([t for t in range(n) if t != j], i - 1):
                acc = 0.0
                for x_t, xp_t, _ in triples:
                    x = np.asarray(x_t)
                    xp = np.asarray(xp_t)
                    swapped = x.copy()
                    swapped[j] = xp[j]
                    hyb = x.copy()
                    hyb[list(subset)] = xp[list(subset)]
                    hyb_j = hyb.copy()
                    hyb_j[j] = xp[j]
                    acc += (f(x) - f(swapped)) * (f(hyb) - f(hyb_j)) * weight
                vals.append(acc)
            for subset in combinations(range(n), i - 1):
                acc = 0.0
                for x_t, xp_t, xpp_t in triples:
                    x = np.asarray(x_t)
                    xp = np.asarray(xp_t)
                    xpp = np.asarray(xpp_t)
                    swapped = x.copy()
                    swapped[j] = xpp[j]
                    hyb = x.copy()
                    hyb[list(subset)] = xp[list(subset)]
                    hyb_j = hyb.copy()
                    hyb_j[j] = xpp[j]
                    acc += (f(x) - f(swapped)) * (f(hyb) - f(hyb_j)) * weight
                vals_p.append(acc)
        b[i - 1] = np.mean(vals)
        b_prime[i - 1] = np.mean(vals_p)
    return b, b_prime


# --- variance_exact ------------------------------------------------------


def test_variance_constant():
    space = ProductSpace.iid_rademacher(3)
    assert variance_exact(BlackBoxFunction(3, lambda x: 7.5), space) == 0.0


def test_variance_first_coordinate():
    space = ProductSpace.iid_rademacher(3)
    assert variance_exact(BlackBoxFunction(3, lambda x: x[0]), space) == pytest.approx(1.0, abs=1e-12)


def test_variance_majority_of_three():
    space = ProductSpace.iid_rademacher(3)
    f = BlackBoxFunction(3, lambda x: math.copysign(1.0, np.sum(x)))
    assert variance_exact(f, space) == pytest.approx(1.0, abs=1e-12)


def test_variance_budget_error():
    space = ProductSpace.iid_rademacher(24)
    with pytest.raises(SizeBudgetError):
        variance_exact(BlackBoxFunction(24, lambda x: 0.0), space)


def test_variance_needs_finite_space():
    space = ProductSpace.iid_gaussian(3)
    with pytest.raises(DomainError):
        variance_exact(BlackBoxFunction(3, lambda x: x[0]), space)


# --- decomposition_exact -------------------------------------------------


def test_anchor_first_coordinate():
    # only the pivot hitting coordinate 0 contributes: probability 1/3,
    # conditional value E(X - X')^2 = 2
    terms = decomposition_exact(
        BlackBoxFunction(3, lambda x: x[0]), ProductSpace.iid_rademacher(3)
    )
    assert np.allclose(terms.terms, 2.0 / 3.0, atol=1e-10)
    assert terms.variance == pytest.approx(1.0, abs=1e-12)
    assert abs(terms.variance - 0.5 * terms.terms.sum()) <= 1e-10


@pytest.mark.parametrize(
    "space",
    [
        ProductSpace.iid_rademacher(4),
        ProductSpace.iid_finite(
            4, [-math.sqrt(1.5), 0.0, math.sqrt(1.5)], [1 / 3, 1 / 3, 1 / 3]
        ),
    ],
)
def test_anchor_additive(space):
    # additive functions spread variance evenly: every B_i = 2, and
    # B'_i = 2 - (i-1)/n since the pivot lands inside the replaced
    # prefix with probability (i-1)/n, where the covariance drops to 1
    n = 4
    f = BlackBoxFunction(n, lambda x: float(np.sum(x)))
    terms = decomposition_exact(f, space)
    assert np.allclose(terms.terms, 2.0, atol=1e-10)
    expected_prime = [2.0 - (i - 1) / n for i in range(1, n + 1)]
    assert np.allclose(terms.terms_prime, expected_prime, atol=1e-10)
    assert terms.variance == pytest.approx(4.0, abs=1e-10)


def test_product_function_vs_triple_oracle():
    f = BlackBoxFunction(2, lambda x: x[0] * x[1])
    terms = decomposition_exact(f, ProductSpace.iid_rademacher(2))
    oracle_b, oracle_bp = triple_enumeration_terms(f, 2)
    assert np.allclose(terms.terms, oracle_b, atol=1e-12)
    assert np.allclose(terms.terms_prime, oracle_bp, atol=1e-12)
    assert terms.terms[0] >= terms.terms[1] >= -1e-12
    assert 0.5 * terms.terms.sum() == pytest.approx(1.0, abs=1e-12)


def test_random_functions_vs_triple_oracle():
    rng = SeedContext(77).child("oracle").generator()
    for n in (2, 3):
        f = random_table_function(n, rng)
        terms = decomposition_exact(f, ProductSpace.iid_rademacher(n))
        oracle_b, oracle_bp = triple_enumeration_terms(f, n)
        assert np.allclose(terms.terms, oracle_b, atol=1e-10)
        assert np.allclose(terms.terms_prime, oracle_bp, atol=1e-10)


def test_permutation_form_equivalence_n3():
    rng = SeedContext(5).child("perm").generator()
    for _ in range(3):
        f = random_table_function(3, rng)
        terms = decomposition_exact(f, ProductSpace.iid_rademacher(3), want_prime=False)
        sigma_terms = sigma_form_terms(f, 3)
        assert np.max(np.abs(terms.terms - sigma_terms)) <= 1e-10


def test_fixed_permutation_chain():
    # for a fixed permutation and pivot outside the prefix the chain
    # A_i >= (coupled middle term) >= 0 holds instance by instance
    rng = SeedContext(13).child("chain").generator()
    n = 4
    assignments = [np.asarray(t) for t in product(RADEMACHER, repeat=n)]
    weight = 1.0 / len(assignments) ** 2
    for _ in range(5):
        f = random_table_function(n, rng)
        for i in range(1, n):
            j = i  # 0-based index of the proof's j = i + 1 choice
            a_i = middle = 0.0
            for x in assignments:
                for xp in assignments:
                    swapped = x.copy()
                    swapped[i - 1] = xp[i - 1]
                    prefix = x.copy()
                    prefix[: i - 1] = xp[: i - 1]
                    prefix_i = prefix.copy()
                    prefix_i[i - 1] = xp[i - 1]
                    first = f(x) - f(swapped)
                    a_i += first * (f(prefix) - f(prefix_i)) * weight
                    prefix_j = prefix.copy()
                    prefix_j[j] = xp[j]
                    prefix_ij = prefix_i.copy()
                    prefix_ij[j] = xp[j]
                    middle += first * (f(prefix_j) - f(prefix_ij)) * weight
            assert a_i >= middle - 1e-12
            assert middle >= -1e-12


def test_exact_corpus_invariants():
    # identity, monotone chain, nonnegative tail, and both 2 Var/k
    # bounds over a corpus of random functions on binary coordinates
    rng = SeedContext(99).child("corpus").generator()
    for idx in range(30):
        n = 2 + idx % 3
        f = random_table_function(n, rng)
        space = ProductSpace.iid_rademacher(n)
        terms = decomposition_exact(f, space)
        assert abs(terms.variance - 0.5 * terms.terms.sum()) <= 1e-10
        diffs = np.diff(terms.terms)
        assert np.all(diffs <= 1e-10)
        assert terms.terms[-1] >= -1e-10
        for k in range(1, n + 1):
            assert terms.terms[k - 1] <= 2 * terms.variance / k + 1e-10
            limit = (2 * terms.variance / k) * (n + 1) / n
            assert terms.terms_prime[k - 1] <= limit + 1e-10
        report = check_bounds(terms)
        assert report.holds and report.identity_error <= 1e-10


def test_decomposition_budget_error():
    space = ProductSpace.iid_rademacher(8)
    with pytest.raises(SizeBudgetError):
        decomposition_exact(BlackBoxFunction(8, lambda x: 0.0), space)


def test_check_bounds_raises_on_bad_exact_terms():
    fake = DecompositionTerms(
        mode="exact",
        n=2,
        indices=(1, 2),
        terms=np.asarray([0.1, 0.9]),
        terms_prime=None,
        variance=0.5,
    )
    with pytest.raises(InvariantViolation):
        check_bounds(fake)


# --- decomposition_mc ----------------------------------------------------


def test_mc_first_coordinate():
    space = ProductSpace.iid_rademacher(3)
    f = BlackBoxFunction(3, lambda x: x[0])
    est = decomposition_mc(f, space, [1, 2, 3], 20_000, SeedContext(1, ("mc1",)))
    for m in range(3):
        assert abs(est.terms[m] - 2.0 / 3.0) <= 4 * est.stderr[m]


def test_mc_additive_gaussian():
    n = 10
    space = ProductSpace.iid_gaussian(n)
    f = BlackBoxFunction(n, lambda x: float(np.sum(x)))
    est = decomposition_mc(f, space, [1, 5, 10], 100_000, SeedContext(2, ("mc2",)))
    for m in range(3):
        assert abs(est.terms[m] - 2.0) <= 4 * est.stderr[m]
        assert est.stderr[m] < 0.05
    assert abs(est.variance - n) <= 4 * est.variance_stderr


def test_mc_matches_exact_for_max_function():
    space = ProductSpace.iid_rademacher(4)
    f = BlackBoxFunction(4, lambda x: float(np.max(x)))
    exact = decomposition_exact(f, space)
    est = decomposition_mc(f, space, [1, 2, 3, 4], 20_000, SeedContext(3, ("mc3",)))
    for m in range(4):
        assert abs(est.terms[m] - exact.terms[m]) <= 4 * est.stderr[m]
        assert abs(est.terms_prime[m] - exact.terms_prime[m]) <= 4 * est.stderr_prime[m]
    report = check_bounds(est)
    assert report.holds


def test_mc_common_random_numbers_determinism():
    space = ProductSpace.iid_gaussian(5)
    f = BlackBoxFunction(5, lambda x: float(np.sum(x**2)))
    a = decomposition_mc(f, space, [1, 3], 500, SeedContext(4, ("crn",)))
    b = decomposition_mc(f, space, [1, 3], 500, SeedContext(4, ("crn",)))
    assert np.array_equal(a.terms, b.terms)
    assert np.array_equal(a.terms_prime, b.terms_prime)


def test_mc_bad_i_list():
    space = ProductSpace.iid_gaussian(4)
    f = BlackBoxFunction(4, lambda x: x[0])
    with pytest.raises(DomainError):
        decomposition_mc(f, space, [0], 10, SeedContext(0))
    with pytest.raises(DomainError):
        decomposition_mc(f, space, [5], 10, SeedContext(0))


# --- eigenvalue adapter --------------------------------------------------


def test_adapter_scalar_matrix():
    # N = 1: the top eigenvalue is the single entry, so B'_1 = 2 sigma0^2
    spec = EntrySpec("gaussian", diag_sigma0=math.sqrt(2))
    space, f = eigenvalue_adapter(1, spec)
    assert space.n == 1 and f.arity == 1
    est = decomposition_mc(f, space, [1], 4000, SeedContext(6, ("adapter1",)))
    assert abs(est.terms_prime[0] - 4.0) <= 4 * est.stderr_prime[0]


def test_adapter_2x2_matches_definitional_oracle():
    spec = EntrySpec("gaussian", diag_sigma0=1.0)
    space, f = eigenvalue_adapter(2, spec)
    assert space.n == 3

    # definitional oracle: E[(lambda - mu)^2] with mu the top eigenvalue
    # after replacing one uniformly chosen coordinate, via the closed
    # form lambda = (a + d)/2 + sqrt(((a - d)/2)^2 + b^2)
    rng = SeedContext(8).child("oracle2").generator()
    m = 200_000
    coords = np.stack(
        [rng.standard_normal(m), rng.standard_normal(m), rng.standard_normal(m)], axis=1
    )

    def top(c):
        a, b, d = c[:, 0], c[:, 1], c[:, 2]
        return (a + d) / 2 + np.sqrt(((a - d) / 2) ** 2 + b**2)

    lam = top(coords)
    j = rng.integers(0, 3, size=m)
    replaced = coords.copy()
    replaced[np.arange(m), j] = rng.standard_normal(m)
    mu = top(replaced)
    sq = (lam - mu) ** 2
    oracle = float(sq.mean())
    oracle_se = float(sq.std(ddof=1) / math.sqrt(m))

    est = decomposition_mc(f, space, [1], 4000, SeedContext(9, ("adapter2",)))
    combined = math.hypot(est.stderr_prime[0], oracle_se)
    assert abs(est.terms_prime[0] - oracle) <= 4 * combined


def test_adapter_16_bound_at_several_k():
    spec = EntrySpec("gaussian", diag_sigma0=math.sqrt(2))
    space, f = eigenvalue_adapter(16, spec)
    n = space.n
    assert n == 136
    est = decomposition_mc(f, space, [1, 8, 64], 400, SeedContext(10, ("adapter16",)))
    for m, k in enumerate((1, 8, 64)):
        limit = (2 * est.variance / k) * (n + 1) / n
        limit_se = (2 * est.variance_stderr / k) * (n + 1) / n
        combined = math.hypot(est.stderr_prime[m], limit_se)
        assert est.terms_prime[m] <= limit + 4 * combined


def test_adapter_rejects_bad_inputs():
    with pytest.raises(DomainError):
        eigenvalue_adapter(0, EntrySpec("gaussian"))
    with pytest.raises(DomainError):
        eigenvalue_adapter(4, "gaussian")


# --- space validation ----------------------------------------------------


def test_space_probability_validation():
    with pytest.raises(DomainError):
        ProductSpace.iid_finite(2, [0.0, 1.0], [0.6, 0.5])
    with pytest.raises(DomainError):
        ProductSpace(2, supports=[([0.0], [1.0])])
    with pytest.raises(DomainError):
        ProductSpace(2)


def test_space_sampling_matches_support():
    space = ProductSpace.iid_finite(4, [-2.0, 5.0], [0.25, 0.75])
    rng = SeedContext(11).child("space").generator()
    draws = np.stack([space.sample(rng) for _ in range(4000)])
    assert set(np.unique(draws)) == {-2.0, 5.0}
    frac = float(np.mean(draws == 5.0))
    assert abs(frac - 0.75) <= 4 * math.sqrt(0.25 * 0.75 / draws.size)
