"""Acceptance suite: every criterion at its stated tolerance.

Each test prints one `ACCEPTANCE <id> <PASS|FAIL>` line (visible with
pytest -s).  Statistical criteria run at the pinned master seed with the
trial counts fixed below; recorded pilot values for the fixed thresholds
live in tests/data/pilot.json.
"""

import math
import time

import numpy as np
import pytest

from eigsens import (
    BlackBoxFunction,
    EigenBasis,
    EntrySpec,
    ProductSpace,
    SeedContext,
    SpectralPoint,
    SweepConfig,
    check_bounds,
    collapse_report,
    decomposition_exact,
    delocalization_study,
    edge_localization_check,
    eigvec_from_resolvent,
    key_inequality_probe,
    lambda_drift_study,
    lambda_variance_scaling,
    overlap_sweep,
    resolvent_entries,
    sample_wigner,
    single_flip_study,
    top_eigenpair,
)
from eigsens.chaos import random_table_function
from eigsens.experiments import resolve_grid
from eigsens.results import rows_to_csv
from eigsens.svgplot import emit_plot

from test_chaos import sigma_form_terms

MASTER_SEED = 20240901
SPEC = EntrySpec("gaussian")
EXACT_TOL = 1e-10


_CAPSYS = None


@pytest.fixture(autouse=True)
def _expose_capsys(capsys):
    # lets report() print its PASS/FAIL line past pytest's capture
    global _CAPSYS
    _CAPSYS = capsys
    yield
    _CAPSYS = None


def report(cid: str, ok: bool, detail: str):
    line = f"ACCEPTANCE {cid} {'PASS' if ok else 'FAIL'}: {detail}"
    if _CAPSYS is not None:
        with _CAPSYS.disabled():
            print(line)
    else:
        print(line)
    assert ok, f"{cid}: {detail}"


def seed() -> SeedContext:
    return SeedContext(MASTER_SEED)


def stat_rows(rows, statistic, N=None):
    out = [r for r in rows if r.statistic == statistic and (N is None or r.N == N)]
    return sorted(out, key=lambda r: (r.N, r.k, r.multiplier))


# --- shared heavy computations -------------------------------------------


@pytest.fixture(scope="module")
def exact_corpus():
    rng = seed().child("acceptance_corpus").generator()
    started = time.monotonic()
    out = []
    for idx in range(102):
        n = 2 + idx % 3
        f = random_table_function(n, rng)
        out.append(decomposition_exact(f, ProductSpace.iid_rademacher(n)))
    return out, time.monotonic() - started


@pytest.fixture(scope="module")
def overlap_512():
    cfg = SweepConfig(N_list=(512,), trials=400, entry=SPEC, master_seed=MASTER_SEED, threads=8)
    return overlap_sweep(cfg)


@pytest.fixture(scope="module")
def variance_scaling():
    started = time.monotonic()
    rows, fit = lambda_variance_scaling(
        (128, 256, 512, 1024), 800, SPEC, seed(), threads=8
    )
    return rows, fit, time.monotonic() - started


def test_c01_variance_identity(exact_corpus):
    corpus, elapsed = exact_corpus
    worst = max(abs(t.variance - 0.5 * t.terms.sum()) for t in corpus)
    report(
        "c01-variance-identity",
        worst <= EXACT_TOL and elapsed < 60,
        f"{len(corpus)} functions, max |Var - sum(B)/2| = {worst:.2e}, {elapsed:.1f}s",
    )


def test_c02_monotone_chain_and_bounds(exact_corpus):
    corpus, elapsed = exact_corpus
    worst_chain = min(float(np.min(-np.diff(t.terms))) for t in corpus)
    worst_tail = min(float(t.terms[-1]) for t in corpus)
    worst_bk = math.inf
    worst_bkp = math.inf
    for t in corpus:
        n = t.n
        for k in range(1, n + 1):
            worst_bk = min(worst_bk, 2 * t.variance / k - t.terms[k - 1])
            limit = (2 * t.variance / k) * (n + 1) / n
            worst_bkp = min(worst_bkp, limit - t.terms_prime[k - 1])
        check_bounds(t)  # raises InvariantViolation on any failure
    ok = (
        worst_chain >= -EXACT_TOL
        and worst_tail >= -EXACT_TOL
        and worst_bk >= -EXACT_TOL
        and worst_bkp >= -EXACT_TOL
        and elapsed < 120
    )
    report(
        "c02-monotone-chain",
        ok,
        f"min margins: chain {worst_chain:.2e}, tail {worst_tail:.2e}, "
        f"2Var/k {worst_bk:.2e}, prime {worst_bkp:.2e}, {elapsed:.1f}s",
    )


def test_c03_permutation_form_equivalence():
    rng = seed().child("acceptance_perm").generator()
    worst = 0.0
    for _ in range(5):
        f = random_table_function(3, rng)
        terms = decomposition_exact(f, ProductSpace.iid_rademacher(3), want_prime=False)
        worst = max(worst, float(np.max(np.abs(terms.terms - sigma_form_terms(f, 3)))))
    report(
        "c03-permutation-equivalence",
        worst <= EXACT_TOL,
        f"max |sigma-form - subset-form| = {worst:.2e} over 5 functions at n=3",
    )


def test_c04_analytic_anchors():
    first = decomposition_exact(
        BlackBoxFunction(3, lambda x: x[0]), ProductSpace.iid_rademacher(3)
    )
    err_first = float(np.max(np.abs(first.terms - 2.0 / 3.0)))
    additive = decomposition_exact(
        BlackBoxFunction(4, lambda x: float(np.sum(x))), ProductSpace.iid_rademacher(4)
    )
    err_add = float(np.max(np.abs(additive.terms - 2.0)))
    report(
        "c04-analytic-anchors",
        err_first <= EXACT_TOL and err_add <= EXACT_TOL,
        f"|B - 2/3| = {err_first:.2e} (coordinate), |B - 2| = {err_add:.2e} (additive)",
    )


def test_c05_variance_scaling_slope(variance_scaling):
    rows, fit, elapsed = variance_scaling
    ok = -0.50 <= fit.slope <= -0.15 and elapsed <= 900
    report(
        "c05-variance-scaling",
        ok,
        f"slope {fit.slope:.4f} (CI [{fit.ci_low:.3f}, {fit.ci_high:.3f}]), "
        f"800 trials/N, {elapsed:.0f}s",
    )


def test_c06_overlap_endpoints_and_monotonicity(overlap_512):
    k0 = stat_rows(overlap_512, "overlap_abs", N=512)[0]
    endpoint_ok = k0.k == 0 and k0.mean == 1.0 and k0.stderr == 0.0

    cfg = SweepConfig(
        N_list=(256,), k_multipliers=(math.inf,), trials=400,
        entry=SPEC, master_seed=MASTER_SEED, threads=8,
    )
    full = stat_rows(overlap_sweep(cfg), "overlap_abs", N=256)[0]
    target = math.sqrt(2 / (math.pi * 256))
    full_ok = abs(full.mean - target) <= 4 * full.stderr

    cells = stat_rows(overlap_512, "overlap_abs", N=512)
    mono_ok = True
    worst_jump = -math.inf
    for a, b in zip(cells, cells[1:]):
        jump = b.mean - a.mean - 2 * math.hypot(a.stderr, b.stderr)
        worst_jump = max(worst_jump, jump)
        mono_ok = mono_ok and jump <= 0
    report(
        "c06-overlap-endpoints",
        endpoint_ok and full_ok and mono_ok,
        f"k=0 mean {k0.mean}, full-resample {full.mean:.4f} vs {target:.4f} "
        f"(4se={4 * full.stderr:.4f}), worst monotonicity excess {worst_jump:.2e}",
    )


def test_c07_threshold_collapse():
    rows = collapse_report(
        (256, 512, 1024), (0.05, 0.25, 1.0), None, SPEC, seed(), threads=8
    )
    spreads = {r.multiplier: r.mean for r in rows if r.statistic == "collapse_spread"}
    worst = max(spreads.values())
    report(
        "c07-threshold-collapse",
        set(spreads) == {0.05, 0.25, 1.0} and worst <= 0.15,
        "cross-N spread per multiplier: "
        + ", ".join(f"m={m:g}: {s:.4f}" for m, s in sorted(spreads.items()))
        + " (limit 0.15)",
    )


def test_c08_key_inequality():
    k_grid = sorted({p.k for p in resolve_grid(512)} - {0})
    rows = key_inequality_probe(512, k_grid, 400, SPEC, seed(), threads=8)
    margins = [r for r in rows if r.statistic == "key_margin"]
    worst = min(r.mean for r in margins)
    report(
        "c08-key-inequality",
        len(margins) == len(k_grid) and worst >= 0.0,
        f"LHS <= RHS + 4se in all {len(margins)} cells at N=512 "
        f"(worst margin {worst:.3e})",
    )


def test_c09_delocalization():
    fractions = {}
    for n_dim in (256, 1024):
        rows = delocalization_study(n_dim, 500, SPEC, seed(), threads=8)
        frac = stat_rows(rows, "within_log_bound_fraction", N=n_dim)[0]
        fractions[n_dim] = frac.mean
    ok = all(f >= 0.99 for f in fractions.values())
    report(
        "c09-delocalization",
        ok,
        f"fraction with sqrt(N)||v||_inf <= 4 log N over 500 trials: {fractions}",
    )


def test_c10_single_flip_stability():
    medians = {}
    for n_dim in (256, 512, 1024):
        rows = single_flip_study(n_dim, 5, 40, SPEC, seed(), threads=8)
        medians[n_dim] = stat_rows(rows, "single_flip_sup_median", N=n_dim)[0].mean
    ok = medians[256] > medians[512] > medians[1024]
    report(
        "c10-single-flip-stability",
        ok,
        f"median sqrt(N) min_s ||v - u||_inf over 200 pairs: {medians}",
    )


def test_c11_first_order_drift():
    rows = lambda_drift_study(512, (1, 16, 64), 400, SPEC, seed(), threads=8)
    res = stat_rows(rows, "first_order_residual_median", N=512)[0]
    term = stat_rows(rows, "first_order_term_median", N=512)[0]
    first_order_ok = res.mean < term.mean

    stds = {r.k: (r.mean, r.stderr) for r in rows if r.statistic == "lambda_drift_std"}
    ratio = stds[64][0] / stds[16][0]
    ratio_se = ratio * math.hypot(stds[64][1] / stds[64][0], stds[16][1] / stds[16][0])
    ratio_ok = abs(ratio - 2.0) <= 4 * ratio_se
    report(
        "c11-first-order-drift",
        first_order_ok and ratio_ok,
        f"median residual {res.mean:.3e} < median term {term.mean:.3e}; "
        f"std ratio {ratio:.3f} vs 2 (4se={4 * ratio_se:.3f})",
    )


def test_c12_resolvent_identities():
    sd = seed()
    localization_hits = 0
    reco_hits = 0
    trials = 100
    for t in range(trials):
        X = sample_wigner(512, SPEC, sd.child("acc_res", t, "matrix"))
        basis = EigenBasis(X)
        lam1 = basis.eigenvalue_from_top(1)
        rep = edge_localization_check(X, 1, lam1, 512 ** (-0.25), basis=basis)
        localization_hits += rep.holds
        pair = top_eigenpair(X)
        rng = sd.child("acc_res", t, "pairs").generator()
        idx = [(int(rng.integers(512)), int(rng.integers(512))) for _ in range(100)]
        dev = eigvec_from_resolvent(X, pair, basis.gap / 10.0, idx, basis=basis)
        bound = 0.05 * 512 * float(np.max(np.abs(pair.vector))) ** 2
        reco_hits += dev <= bound

    agree_max = 0.0
    for t in range(5):
        X = sample_wigner(256, SPEC, sd.child("acc_paths", t))
        basis = EigenBasis(X)
        point = SpectralPoint(basis.eigenvalue_from_top(1), 256 ** (-0.25))
        rng = sd.child("acc_paths_idx", t).generator()
        idx = [(int(rng.integers(256)), int(rng.integers(256))) for _ in range(60)]
        a = resolvent_entries(X, point, idx, method="eig", basis=basis)
        b = resolvent_entries(X, point, idx, method="solve")
        agree_max = max(agree_max, float(np.max(np.abs(a.values - b.values))))

    ok = localization_hits == trials and reco_hits >= 0.95 * trials and agree_max <= 1e-8
    report(
        "c12-resolvent-identities",
        ok,
        f"localization {localization_hits}/{trials}, reconstruction "
        f"{reco_hits}/{trials}, paths agree to {agree_max:.2e}",
    )


def test_c13_determinism(tmp_path):
    def run(threads):
        cfg = SweepConfig(
            N_list=(48,), k_multipliers=(0.0, 0.5, math.inf), trials=8,
            entry=SPEC, master_seed=MASTER_SEED, threads=threads,
        )
        return overlap_sweep(cfg)

    rows_serial = run(1)
    rows_threaded = run(3)
    csv_same = rows_to_csv(rows_serial).encode() == rows_to_csv(rows_threaded).encode()

    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    emit_plot(rows_serial, "overlap", a)
    emit_plot(rows_threaded, "overlap", b)
    svg_same = a.read_bytes() == b.read_bytes()
    report(
        "c13-determinism",
        csv_same and svg_same,
        "rerun with different worker counts: CSV byte-identical "
        f"{csv_same}, SVG byte-identical {svg_same}",
    )
