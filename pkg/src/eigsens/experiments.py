"""Monte Carlo sweeps over (N, k) for the resampling-sensitivity study.

Every sweep couples its k-grid within a trial: one uniformly random
position sequence is drawn per trial and each X^[k] replaces the first k
positions with the same fresh values, so the resample sets are nested
(S_k1 is a prefix of S_k2 for k1 < k2) and k-comparisons are paired.
Trials derive independent seed streams, are reduced in trial order, and
produce identical tables for any worker count.

Trials whose top spectral gap (base or resampled) falls below the
degeneracy threshold are excluded from eigenvector statistics, with
counts recorded per cell.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .ensemble import (
    EntrySpec,
    IndexPairSet,
    apply_resample,
    pair_count,
    sample_pair_set,
    sample_wigner,
)
from .errors import ConfigError, DomainError, InvariantViolation
from .rng import SeedContext
from .spectral import DEFAULT_TOL, distance_stats, edge_eigensystem

#: Default k-grid, as multipliers of N^(5/3); inf denotes the full pair set.
DEFAULT_MULTIPLIERS = (0.0, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0, math.inf)

def default_trials(N: int) -> int:
    """Per-cell trial default: plenty below the dense cutoff, fewer above."""
    return 400 if N <= 512 else 100


#: Cells with more than this fraction of excluded trials are flagged invalid.
EXCLUSION_LIMIT = 0.01

_BOOTSTRAP_RESAMPLES = 200


@dataclass(frozen=True)
class SweepConfig:
    """Full description of one sweep run (also the config-file schema)."""

    N_list: tuple = (256, 512)
    k_multipliers: tuple = DEFAULT_MULTIPLIERS
    k_values: tuple = ()
    trials: Optional[int] = None
    entry: EntrySpec = field(default_factory=EntrySpec)
    master_seed: int = 0
    threads: int = 1
    tol: float = DEFAULT_TOL
    quantiles: bool = True
    drift_k_values: tuple = (0, 1, 4, 16, 64)
    flip_pairs: int = 5

    def __post_init__(self):
        if not self.N_list:
            raise ConfigError("N_list must not be empty")
        for n in self.N_list:
            if n < 1:
                raise ConfigError(f"N must be >= 1, got {n}")
        if self.trials is not None and self.trials < 2:
            raise ConfigError(f"trials must be >= 2, got {self.trials}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        for n in self.N_list:
            for k in self.k_values:
                if not 0 <= k <= pair_count(n):
                    raise ConfigError(
                        f"k={k} exceeds the {pair_count(n)} available "
                        f"positions at N={n}"
                    )

    def trials_for(self, N: int) -> int:
        return self.trials if self.trials is not None else default_trials(N)

    def seed_context(self) -> SeedContext:
        return SeedContext(self.master_seed)


@dataclass(frozen=True)
class GridPoint:
    """One resolved k-grid cell: absolute k plus its multiplier label
    k / N^(5/3) (inf labels the full pair set)."""

    k: int
    multiplier: float


@dataclass(frozen=True)
class ResultRow:
    """One statistic in one (N, k) cell; exactly the CSV schema."""

    experiment: str
    N: int
    k: int
    multiplier: float
    statistic: str
    mean: float
    stderr: float
    trials: int
    excluded: int


def resolve_grid(
    N: int,
    multipliers: Optional[Sequence[float]] = None,
    k_values: Optional[Sequence[int]] = None,
) -> tuple:
    """Map a configured grid to concrete k values at dimension N, sorted
    ascending.  Multipliers scale N^(5/3) and clip at the full pair set."""
    n_max = pair_count(N)
    points = []
    if k_values:
        for k in k_values:
            if not 0 <= k <= n_max:
                raise DomainError(f"k={k} out of range 0..{n_max} at N={N}")
            points.append(GridPoint(int(k), k / N ** (5.0 / 3.0)))
    else:
        for m in multipliers if multipliers is not None else DEFAULT_MULTIPLIERS:
            if m == math.inf:
                points.append(GridPoint(n_max, math.inf))
            else:
                if m < 0:
                    raise DomainError(f"multiplier must be >= 0, got {m}")
                points.append(GridPoint(min(round(m * N ** (5.0 / 3.0)), n_max), m))
    return tuple(sorted(points, key=lambda p: (p.k, p.multiplier)))


def grid_for(cfg: SweepConfig, N: int) -> tuple:
    return resolve_grid(N, cfg.k_multipliers, cfg.k_values or None)


def run_trials(n_trials: int, worker, threads: int = 1) -> list:
    """Run worker(t) for t in range(n_trials), reducing in trial order.

    Results are identical for any thread count because each trial owns
    its seed stream and the reduction order is fixed."""
    if threads <= 1:
        return [worker(t) for t in range(n_trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, range(n_trials)))


def _mean_se(values: np.ndarray) -> tuple:
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    mean = float(values.mean()) if n else math.nan
    se = float(values.std(ddof=1) / math.sqrt(n)) if n >= 2 else 0.0
    return mean, se


def _variance_se(values: np.ndarray) -> tuple:
    """Sample variance (ddof=1) and its asymptotic moment-based SE."""
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    var = float(values.var(ddof=1))
    centered = values - values.mean()
    m4 = float(np.mean(centered**4))
    se = math.sqrt(max(m4 - var**2, 0.0) / n)
    return var, se


def _bootstrap_se(values: np.ndarray, stat, seed: SeedContext) -> float:
    values = np.asarray(values, dtype=np.float64)
    rng = seed.generator()
    n = len(values)
    if n < 2:
        return 0.0
    stats = np.empty(_BOOTSTRAP_RESAMPLES)
    for b in range(_BOOTSTRAP_RESAMPLES):
        stats[b] = stat(values[rng.integers(0, n, size=n)])
    return float(stats.std(ddof=1))


@dataclass
class _CellData:
    point: GridPoint
    overlap_abs: list = field(default_factory=list)
    overlap_sq: list = field(default_factory=list)
    l2: list = field(default_factory=list)
    sup_scaled: list = field(default_factory=list)
    l2_runmax: list = field(default_factory=list)
    lambda_k: list = field(default_factory=list)
    excluded: int = 0


@dataclass
class _SweepData:
    """Per-N accumulation of one coupled sweep."""

    N: int
    grid: tuple
    trials: int
    cells: list
    base_lambdas: np.ndarray
    base_sup_scaled: np.ndarray


def _coupled_sweep(
    experiment: str,
    N: int,
    grid: tuple,
    trials: int,
    spec: EntrySpec,
    seed: SeedContext,
    tol: float = DEFAULT_TOL,
    threads: int = 1,
) -> _SweepData:
    """Run the nested-resampling trial engine at one dimension."""
    k_max = max((p.k for p in grid), default=0)

    def trial(t: int):
        ctx = seed.child(experiment, N, t)
        X = sample_wigner(N, spec, ctx.child("matrix"))
        S = sample_pair_set(N, k_max, ctx.child("pairs"))
        lin = S.linear_indices()
        base = edge_eigensystem(X, tol)
        base_bad = base.degenerate()
        records = []
        prev_vals = np.zeros(0)
        for point in grid:
            if point.k == 0:
                # X^[0] is X bit-identical, so the statistics are exact.
                records.append(
                    {
                        "overlap_abs": 1.0,
                        "overlap_sq": 1.0,
                        "l2": 0.0,
                        "sup_scaled": 0.0,
                        "lambda_k": base.lambda1,
                        "bad": base_bad,
                    }
                )
                continue
            x_k = apply_resample(X, S.prefix(point.k), spec, ctx.child("fresh"))
            vals = x_k.upper[lin[: point.k]]
            if not np.array_equal(vals[: len(prev_vals)], prev_vals):
                raise InvariantViolation(
                    "nested resampling coupling broke: fresh-draw prefix differs"
                )
            prev_vals = vals
            sys_k = edge_eigensystem(x_k, tol)
            d = distance_stats(base.vector, sys_k.vector)
            inner = float(base.vector @ sys_k.vector)
            records.append(
                {
                    "overlap_abs": abs(inner),
                    "overlap_sq": inner * inner,
                    "l2": d.l2_aligned,
                    "sup_scaled": d.sup_aligned_scaled,
                    "lambda_k": sys_k.lambda1,
                    "bad": base_bad or sys_k.degenerate(),
                }
            )
        sup_v = math.sqrt(N) * float(np.max(np.abs(base.vector)))
        return base.lambda1, sup_v, records

    results = run_trials(trials, trial, threads)

    cells = [_CellData(point) for point in grid]
    base_lambdas = np.empty(trials)
    base_sup = np.empty(trials)
    for t, (lam, sup_v, records) in enumerate(results):
        base_lambdas[t] = lam
        base_sup[t] = sup_v
        any_bad = any(r["bad"] for r in records)
        runmax = 0.0
        for cell, rec in zip(cells, records):
            if rec["bad"]:
                cell.excluded += 1
                continue
            cell.overlap_abs.append(rec["overlap_abs"])
            cell.overlap_sq.append(rec["overlap_sq"])
            cell.l2.append(rec["l2"])
            cell.sup_scaled.append(rec["sup_scaled"])
            cell.lambda_k.append(rec["lambda_k"])
            if not any_bad:
                runmax = max(runmax, rec["l2"])
                cell.l2_runmax.append(runmax)
    return _SweepData(N, grid, trials, cells, base_lambdas, base_sup)


def _cell_rows(experiment: str, data: _SweepData, stats: dict) -> list:
    rows = []
    for cell in data.cells:
        used = data.trials - cell.excluded
        for stat_name, attr in stats.items():
            mean, se = _mean_se(getattr(cell, attr))
            rows.append(
                ResultRow(
                    experiment=experiment,
                    N=data.N,
                    k=cell.point.k,
                    multiplier=cell.point.multiplier,
                    statistic=stat_name,
                    mean=mean,
                    stderr=se,
                    trials=used,
                    excluded=cell.excluded,
                )
            )
    return rows


def overlap_sweep(cfg: SweepConfig) -> list:
    """Mean |<v, v^[k]>| (and the squared form) per (N, k) cell."""
    rows = []
    seed = cfg.seed_context()
    for N in cfg.N_list:
        data = _coupled_sweep(
            "overlap", N, grid_for(cfg, N), cfg.trials_for(N), cfg.entry,
            seed, cfg.tol, cfg.threads,
        )
        rows.extend(
            _cell_rows("overlap", data, {"overlap_abs": "overlap_abs", "overlap_sq": "overlap_sq"})
        )
    return rows


def alignment_sweep(cfg: SweepConfig) -> list:
    """Sign-aligned eigenvector distances per (N, k) cell: the l2 form,
    the sqrt(N)-scaled sup form, and the running max of the l2 form over
    the nested grid (the max-over-k statistic)."""
    rows = []
    seed = cfg.seed_context()
    for N in cfg.N_list:
        data = _coupled_sweep(
            "alignment", N, grid_for(cfg, N), cfg.trials_for(N), cfg.entry,
            seed, cfg.tol, cfg.threads,
        )
        rows.extend(
            _cell_rows(
                "alignment",
                data,
                {
                    "align_l2": "l2",
                    "align_sup_scaled": "sup_scaled",
                    "align_l2_runmax": "l2_runmax",
                },
            )
        )
    return rows


@dataclass(frozen=True)
class ScalingFit:
    """OLS fit of log Var(lambda) against log N with a bootstrap CI."""

    slope: float
    intercept: float
    slope_stderr: float
    ci_low: float
    ci_high: float


def lambda_variance_scaling(
    N_list: Sequence[int],
    trials: Optional[int],
    spec: EntrySpec,
    seed: SeedContext,
    threads: int = 1,
    tol: float = DEFAULT_TOL,
    bootstrap: int = 1000,
) -> tuple:
    """Sample variance of the top eigenvalue per N and the fitted log-log
    slope; returns (rows, ScalingFit or None when len(N_list) < 2)."""
    rows = []
    samples = {}
    for N in N_list:
        n_trials = trials if trials is not None else default_trials(N)

        def trial(t: int, N=N):
            X = sample_wigner(N, spec, seed.child("varlambda", N, t, "matrix"))
            return edge_eigensystem(X, tol).lambda1

        lams = np.asarray(run_trials(n_trials, trial, threads))
        samples[N] = lams
        var, se = _variance_se(lams)
        rows.append(
            ResultRow("var_lambda", N, 0, 0.0, "lambda_var", var, se, n_trials, 0)
        )

    fit = None
    if len(N_list) >= 2:
        log_n = np.log(np.asarray(N_list, dtype=np.float64))
        log_v = np.log(np.asarray([samples[N].var(ddof=1) for N in N_list]))
        slope, intercept = np.polyfit(log_n, log_v, 1)
        rng = seed.child("varlambda", "bootstrap").generator()
        slopes = np.empty(bootstrap)
        for b in range(bootstrap):
            log_vb = np.log(
                [
                    samples[N][rng.integers(0, len(samples[N]), size=len(samples[N]))].var(ddof=1)
                    for N in N_list
                ]
            )
            slopes[b] = np.polyfit(log_n, log_vb, 1)[0]
        fit = ScalingFit(
            slope=float(slope),
            intercept=float(intercept),
            slope_stderr=float(slopes.std(ddof=1)),
            ci_low=float(np.quantile(slopes, 0.025)),
            ci_high=float(np.quantile(slopes, 0.975)),
        )
        rows.append(
            ResultRow(
                "var_lambda", 0, 0, 0.0, "loglog_slope", fit.slope,
                fit.slope_stderr, bootstrap, 0,
            )
        )
    return rows, fit


def lambda_drift_study(
    N: int,
    k_grid: Sequence[int],
    trials: Optional[int],
    spec: EntrySpec,
    seed: SeedContext,
    threads: int = 1,
    tol: float = DEFAULT_TOL,
) -> list:
    """Drift lambda^[k] - lambda per k under the nested coupling, plus the
    first-order perturbation residual at k = 1.

    At k = 1 with resampled position (i, j), the first-order term is
    (1 + [i != j]) * v_i * v_j * (X'_ij - X_ij); the residual is the
    drift minus that term."""
    grid = sorted(set(int(k) for k in k_grid))
    if grid and grid[0] < 0:
        raise DomainError(f"k values must be >= 0, got {grid[0]}")
    n_trials = trials if trials is not None else default_trials(N)
    k_max = max(grid, default=0)

    def trial(t: int):
        ctx = seed.child("drift", N, t)
        X = sample_wigner(N, spec, ctx.child("matrix"))
        S = sample_pair_set(N, k_max, ctx.child("pairs"))
        base = edge_eigensystem(X, tol)
        drifts = {}
        first_order = None
        for k in grid:
            if k == 0:
                drifts[k] = 0.0
                continue
            x_k = apply_resample(X, S.prefix(k), spec, ctx.child("fresh"))
            lam_k = edge_eigensystem(x_k, tol).lambda1
            drifts[k] = lam_k - base.lambda1
            if k == 1:
                i, j = S.pairs[0]
                delta = x_k.entry(i, j) - X.entry(i, j)
                term = (1 + (i != j)) * base.vector[i] * base.vector[j] * delta
                first_order = (abs(drifts[k] - term), abs(term))
        return drifts, first_order

    results = run_trials(n_trials, trial, threads)
    rows = []
    for k in grid:
        drifts = np.asarray([r[0][k] for r in results])
        mean, se = _mean_se(drifts)
        rows.append(ResultRow("drift", N, k, k / N ** (5 / 3), "lambda_drift_mean", mean, se, n_trials, 0))
        std = float(drifts.std(ddof=1)) if n_trials >= 2 else 0.0
        std_se = std / math.sqrt(2.0 * max(n_trials - 1, 1))
        rows.append(ResultRow("drift", N, k, k / N ** (5 / 3), "lambda_drift_std", std, std_se, n_trials, 0))
    if 1 in grid:
        residuals = np.asarray([r[1][0] for r in results])
        terms = np.asarray([r[1][1] for r in results])
        for name, values in (
            ("first_order_residual_median", residuals),
            ("first_order_term_median", terms),
        ):
            se = _bootstrap_se(values, np.median, seed.child("drift", N, name))
            rows.append(
                ResultRow("drift", N, 1, 1 / N ** (5 / 3), name, float(np.median(values)), se, n_trials, 0)
            )
    return rows


def single_flip_study(
    N: int,
    pair_sample_size: int,
    trials: Optional[int],
    spec: EntrySpec,
    seed: SeedContext,
    threads: int = 1,
    tol: float = DEFAULT_TOL,
) -> list:
    """Scaled sup-norm eigenvector movement under single-entry resampling.

    Each trial samples one matrix and ``pair_sample_size`` random
    positions; reports pooled median and 95th percentile of
    sqrt(N) * min_s ||v - s u||_inf."""
    if pair_sample_size < 1:
        raise DomainError(f"pair_sample_size must be >= 1, got {pair_sample_size}")
    n_trials = trials if trials is not None else default_trials(N)

    def trial(t: int):
        ctx = seed.child("flip", N, t)
        X = sample_wigner(N, spec, ctx.child("matrix"))
        base = edge_eigensystem(X, tol)
        S = sample_pair_set(N, pair_sample_size, ctx.child("pairs"))
        out = []
        excluded = 0
        for idx, (i, j) in enumerate(S.pairs):
            x_f = apply_resample(X, IndexPairSet(N, ((i, j),)), spec, ctx.child("fresh", idx))
            sys_f = edge_eigensystem(x_f, tol)
            if base.degenerate() or sys_f.degenerate():
                excluded += 1
                continue
            out.append(distance_stats(base.vector, sys_f.vector).sup_aligned_scaled)
        return out, excluded

    results = run_trials(n_trials, trial, threads)
    pooled = np.asarray([v for out, _ in results for v in out])
    excluded = sum(exc for _, exc in results)
    rows = []
    for name, stat in (
        ("single_flip_sup_median", np.median),
        ("single_flip_sup_p95", lambda v: np.quantile(v, 0.95)),
    ):
        se = _bootstrap_se(pooled, stat, seed.child("flip", N, name))
        rows.append(
            ResultRow("single_flip", N, 1, 1 / N ** (5 / 3), name, float(stat(pooled)), se, n_trials, excluded)
        )
    return rows


def delocalization_study(
    N: int,
    trials: Optional[int],
    spec: EntrySpec,
    seed: SeedContext,
    threads: int = 1,
    tol: float = DEFAULT_TOL,
    log_factor: float = 4.0,
) -> list:
    """Sup-norm spread of the top eigenvector: mean sqrt(N) ||v||_inf and
    the fraction of trials with sqrt(N) ||v||_inf <= log_factor * log N."""
    n_trials = trials if trials is not None else default_trials(N)

    def trial(t: int):
        X = sample_wigner(N, spec, seed.child("deloc", N, t, "matrix"))
        sys = edge_eigensystem(X, tol)
        return math.sqrt(N) * float(np.max(np.abs(sys.vector)))

    sups = np.asarray(run_trials(n_trials, trial, threads))
    mean, se = _mean_se(sups)
    frac = float(np.mean(sups <= log_factor * math.log(N)))
    frac_se = math.sqrt(max(frac * (1 - frac), 0.0) / n_trials)
    return [
        ResultRow("delocalization", N, 0, 0.0, "sup_norm_scaled", mean, se, n_trials, 0),
        ResultRow(
            "delocalization", N, 0, 0.0, "within_log_bound_fraction",
            frac, frac_se, n_trials, 0,
        ),
    ]


def key_inequality_probe(
    N: int,
    k_grid: Sequence[int],
    trials: Optional[int],
    spec: EntrySpec,
    seed: SeedContext,
    threads: int = 1,
    tol: float = DEFAULT_TOL,
) -> list:
    """Compare the squared mean overlap against the superconcentration
    bound 2 N^2 Var(lambda) (n+1)/(n k), n = N(N+1)/2, per k cell.

    Raises :class:`InvariantViolation` when the inequality fails beyond
    4 combined standard errors in any cell."""
    grid_pts = tuple(GridPoint(int(k), k / N ** (5 / 3)) for k in sorted(set(k_grid)) if k > 0)
    if not grid_pts:
        raise DomainError("key inequality probe needs at least one k >= 1")
    n_trials = trials if trials is not None else default_trials(N)
    data = _coupled_sweep("key_inequality", N, grid_pts, n_trials, spec, seed, tol, threads)
    var_lam, var_se = _variance_se(data.base_lambdas)
    n_coords = pair_count(N)
    factor = (n_coords + 1) / n_coords
    rows = []
    for cell in data.cells:
        mean_ov, se_ov = _mean_se(cell.overlap_abs)
        lhs = mean_ov**2
        lhs_se = 2 * abs(mean_ov) * se_ov
        rhs = 2 * N**2 * var_lam * factor / cell.point.k
        rhs_se = 2 * N**2 * var_se * factor / cell.point.k
        combined = math.hypot(lhs_se, rhs_se)
        margin = rhs + 4 * combined - lhs
        used = data.trials - cell.excluded
        common = dict(
            experiment="key_inequality", N=N, k=cell.point.k,
            multiplier=cell.point.multiplier, trials=used, excluded=cell.excluded,
        )
        rows.append(ResultRow(statistic="key_lhs", mean=lhs, stderr=lhs_se, **common))
        rows.append(ResultRow(statistic="key_rhs", mean=rhs, stderr=rhs_se, **common))
        rows.append(ResultRow(statistic="key_margin", mean=margin, stderr=combined, **common))
        if margin < 0:
            raise InvariantViolation(
                f"key inequality failed at N={N}, k={cell.point.k}: "
                f"LHS {lhs:.4e} > RHS {rhs:.4e} + 4 SE"
            )
    return rows


def collapse_report(
    N_list: Sequence[int],
    multiplier_grid: Sequence[float],
    trials: Optional[int],
    spec: EntrySpec,
    seed: SeedContext,
    threads: int = 1,
    tol: float = DEFAULT_TOL,
) -> list:
    """Mean overlap on a matched multiplier grid m = k / N^(5/3) across
    dimensions, plus the cross-N spread per multiplier."""
    rows = []
    per_multiplier = {}
    for N in N_list:
        grid = resolve_grid(N, multipliers=multiplier_grid)
        n_trials = trials if trials is not None else default_trials(N)
        data = _coupled_sweep("collapse", N, grid, n_trials, spec, seed, tol, threads)
        rows.extend(_cell_rows("collapse", data, {"overlap_abs": "overlap_abs"}))
        for cell in data.cells:
            mean, se = _mean_se(cell.overlap_abs)
            per_multiplier.setdefault(cell.point.multiplier, []).append((mean, se))
    for m, entries in sorted(per_multiplier.items()):
        if len(entries) < 2:
            continue
        means = [e[0] for e in entries]
        hi = max(entries, key=lambda e: e[0])
        lo = min(entries, key=lambda e: e[0])
        rows.append(
            ResultRow(
                "collapse", 0, 0, m, "collapse_spread",
                max(means) - min(means), math.hypot(hi[1], lo[1]),
                len(entries), 0,
            )
        )
    return rows


def invalid_cells(rows: Sequence[ResultRow]) -> list:
    """Cells whose excluded-trial fraction exceeds the 1% limit."""
    bad = []
    seen = set()
    for row in rows:
        key = (row.experiment, row.N, row.k, row.multiplier)
        if key in seen:
            continue
        seen.add(key)
        total = row.trials + row.excluded
        if total and row.excluded / total > EXCLUSION_LIMIT:
            bad.append(key)
    return bad
