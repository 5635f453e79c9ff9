"""Command-line frontend.

Subcommands cover the sweep experiments, the exact decomposition checks,
resolvent diagnostics, and SVG plotting.  Exit codes: 0 success, 2
configuration error, 3 invariant violation, 4 solver non-convergence.
"""

from __future__ import annotations

import argparse
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import chaos, experiments, resolvent, spectral
from .config import emit_config, override, parse_config
from .ensemble import sample_wigner
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateGapError,
    DomainError,
    EigsensError,
    InvariantViolation,
)
from .experiments import ResultRow, SweepConfig
from .results import RunManifest, _atomic_write, read_results, write_results
from .svgplot import emit_plot


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _load_config(args) -> SweepConfig:
    cfg = parse_config(args.config) if args.config else SweepConfig()
    return override(cfg, seed=args.seed, trials=args.trials, threads=args.threads)


def _finish(args, cfg: SweepConfig, experiment: str, rows, started: str) -> None:
    manifest = RunManifest.for_run(experiment, emit_config(cfg), cfg.master_seed, started)
    manifest.finished = _timestamp()
    paths = write_results(rows, manifest, args.out_dir)
    for path in paths:
        print(f"wrote {path}")
    if manifest.invalid_cells:
        print(f"warning: cells over the exclusion limit: {manifest.invalid_cells}")


def cmd_sample(args) -> int:
    cfg = _load_config(args)
    N = cfg.N_list[0]
    started = _timestamp()
    X = sample_wigner(N, cfg.entry, cfg.seed_context().child("sample", N, 0, "matrix"))
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, f"sample_N{N}.csv")
    np.savetxt(path, X.to_dense(), delimiter=",", fmt="%.17g")
    pair = spectral.top_eigenpair(X, cfg.tol)
    print(f"sampled N={N} {cfg.entry.offdiag_dist} matrix: top eigenvalue {pair.value:.6f}")
    manifest = RunManifest.for_run("sample", emit_config(cfg), cfg.master_seed, started)
    manifest.finished = _timestamp()
    manifest.outputs.append(f"sample_N{N}.csv")
    manifest_path = os.path.join(args.out_dir, "sample_manifest.json")
    _atomic_write(manifest_path, manifest.to_json())
    print(f"wrote {path}")
    print(f"wrote {manifest_path}")
    return 0


def cmd_overlap_sweep(args) -> int:
    cfg = _load_config(args)
    started = _timestamp()
    rows = experiments.overlap_sweep(cfg)
    _finish(args, cfg, "overlap", rows, started)
    return 0


def cmd_alignment_sweep(args) -> int:
    cfg = _load_config(args)
    started = _timestamp()
    rows = experiments.alignment_sweep(cfg)
    _finish(args, cfg, "alignment", rows, started)
    return 0


def cmd_var_lambda(args) -> int:
    cfg = _load_config(args)
    started = _timestamp()
    rows, fit = experiments.lambda_variance_scaling(
        cfg.N_list, cfg.trials, cfg.entry, cfg.seed_context(),
        threads=cfg.threads, tol=cfg.tol,
    )
    if fit is not None:
        print(
            f"log-log slope {fit.slope:.4f} "
            f"(bootstrap 95% CI [{fit.ci_low:.4f}, {fit.ci_high:.4f}])"
        )
    _finish(args, cfg, "var_lambda", rows, started)
    return 0


def _drop_quantile_rows(cfg, rows):
    if cfg.quantiles:
        return rows
    return [r for r in rows if not r.statistic.endswith(("_median", "_p95"))]


def cmd_drift(args) -> int:
    cfg = _load_config(args)
    started = _timestamp()
    rows = []
    for N in cfg.N_list:
        rows.extend(
            experiments.lambda_drift_study(
                N, cfg.drift_k_values, cfg.trials, cfg.entry, cfg.seed_context(),
                threads=cfg.threads, tol=cfg.tol,
            )
        )
    _finish(args, cfg, "drift", _drop_quantile_rows(cfg, rows), started)
    return 0


def cmd_single_flip(args) -> int:
    cfg = _load_config(args)
    started = _timestamp()
    rows = []
    for N in cfg.N_list:
        rows.extend(
            experiments.single_flip_study(
                N, cfg.flip_pairs, cfg.trials, cfg.entry, cfg.seed_context(),
                threads=cfg.threads, tol=cfg.tol,
            )
        )
    _finish(args, cfg, "single_flip", _drop_quantile_rows(cfg, rows), started)
    return 0


def cmd_collapse(args) -> int:
    cfg = _load_config(args)
    started = _timestamp()
    multipliers = tuple(m for m in cfg.k_multipliers if m > 0)
    rows = experiments.collapse_report(
        cfg.N_list, multipliers, cfg.trials, cfg.entry, cfg.seed_context(),
        threads=cfg.threads, tol=cfg.tol,
    )
    _finish(args, cfg, "collapse", rows, started)
    return 0


def cmd_chaos_check(args) -> int:
    cfg = _load_config(args)
    started = _timestamp()
    corpus = cfg.trials if cfg.trials is not None else 100
    rows = []
    rng = cfg.seed_context().child("chaos_corpus").generator()
    worst_identity = 0.0
    for fn_index in range(corpus):
        n = 2 + fn_index % 3
        f = chaos.random_table_function(n, rng)
        space = chaos.ProductSpace.iid_rademacher(n)
        terms = chaos.decomposition_exact(f, space)
        report = chaos.check_bounds(terms)
        worst_identity = max(worst_identity, report.identity_error)
        rows.append(
            ResultRow("chaos_check", n, 0, 0.0, "identity_abs_err",
                      report.identity_error, 0.0, 1, 0)
        )
    print(f"chaos-check: {corpus} random functions, max identity error {worst_identity:.3e}")
    _finish(args, cfg, "chaos_check", rows, started)
    return 0


def cmd_resolvent_check(args) -> int:
    cfg = _load_config(args)
    started = _timestamp()
    N = cfg.N_list[0]
    trials = cfg.trials if cfg.trials is not None else 20
    seed = cfg.seed_context()
    rows = []
    holds = 0
    deviation_ok = 0
    sym_max = 0.0
    trace_max = 0.0
    for t in range(trials):
        X = sample_wigner(N, cfg.entry, seed.child("resolvent", N, t, "matrix"))
        basis = resolvent.EigenBasis(X)
        lam1 = basis.eigenvalue_from_top(1)
        eta = N ** (-0.25)
        report = resolvent.edge_localization_check(X, 1, lam1, eta, basis=basis)
        holds += report.holds
        rng = seed.child("resolvent", N, t, "pairs").generator()
        idx = [(int(rng.integers(N)), int(rng.integers(N))) for _ in range(40)]
        point = resolvent.SpectralPoint(lam1, eta)
        block = resolvent.resolvent_entries(X, point, idx, basis=basis)
        mirrored = resolvent.resolvent_entries(
            X, point, [(j, i) for i, j in idx], basis=basis
        )
        sym_max = max(sym_max, float(np.max(np.abs(block.values - mirrored.values))))
        trace = np.sum(np.imag(basis.diagonal(point)))
        spectral_sum = np.sum(eta / ((basis.values - lam1) ** 2 + eta**2))
        trace_max = max(trace_max, abs(float(trace - spectral_sum)))
        pair = spectral.top_eigenpair(X, cfg.tol)
        gap = basis.gap
        if gap > spectral.degenerate_gap_threshold(N):
            dev = resolvent.eigvec_from_resolvent(X, pair, gap / 10.0, idx, basis=basis)
            bound = 0.05 * N * float(np.max(np.abs(pair.vector))) ** 2
            deviation_ok += dev <= bound
    probe_matrix = sample_wigner(N, cfg.entry, seed.child("resolvent", N, "zero", "matrix"))
    zero_diag = resolvent.zero_diag_resolvent_report(probe_matrix)
    probe_basis = resolvent.EigenBasis(probe_matrix)
    magnitudes = resolvent.entry_magnitude_report(
        probe_matrix,
        resolvent.SpectralPoint(probe_basis.eigenvalue_from_top(1), N ** (-1 / 6)),
        basis=probe_basis,
    )
    rows.append(ResultRow("resolvent_check", N, 0, 0.0, "offdiag_over_delta_scale",
                          magnitudes.offdiag_over_scale, 0.0, 1, 0))
    rows.append(ResultRow("resolvent_check", N, 0, 0.0, "diag_scaled_max",
                          magnitudes.diag_scaled, 0.0, 1, 0))
    rows.append(ResultRow("resolvent_check", N, 0, 0.0, "localization_holds_fraction",
                          holds / trials, 0.0, trials, 0))
    rows.append(ResultRow("resolvent_check", N, 0, 0.0, "eigvec_deviation_ok_fraction",
                          deviation_ok / trials, 0.0, trials, 0))
    rows.append(ResultRow("resolvent_check", N, 0, 0.0, "symmetry_max_abs", sym_max, 0.0, trials, 0))
    rows.append(ResultRow("resolvent_check", N, 0, 0.0, "trace_identity_max_abs",
                          trace_max, 0.0, trials, 0))
    rows.append(ResultRow("resolvent_check", N, 0, 0.0, "zero_diag_scaled_max",
                          zero_diag.scaled_max, 0.0, 1, 0))
    print(
        f"resolvent-check: localization {holds}/{trials}, "
        f"eigvec deviation ok {deviation_ok}/{trials}, symmetry max {sym_max:.3e}"
    )
    if holds != trials:
        raise InvariantViolation("resolvent localization bound failed on a sampled instance")
    _finish(args, cfg, "resolvent_check", rows, started)
    return 0


def cmd_plot(args) -> int:
    rows = read_results(args.csv)
    os.makedirs(args.out_dir, exist_ok=True)
    out_path = os.path.join(args.out_dir, f"{args.kind}.svg")
    emit_plot(rows, args.kind, out_path)
    print(f"wrote {out_path}")
    return 0


_COMMANDS = {
    "sample": cmd_sample,
    "overlap-sweep": cmd_overlap_sweep,
    "alignment-sweep": cmd_alignment_sweep,
    "var-lambda": cmd_var_lambda,
    "drift": cmd_drift,
    "single-flip": cmd_single_flip,
    "chaos-check": cmd_chaos_check,
    "resolvent-check": cmd_resolvent_check,
    "collapse": cmd_collapse,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a key = value config file")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out-dir", default="results", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads for trials")
    common.add_argument("--trials", type=int, help="override trials per cell")

    parser = argparse.ArgumentParser(
        prog="eigsens",
        description="Noise-sensitivity experiments for top eigenvectors of "
        "random symmetric matrices",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "plot":
            p.add_argument("csv", help="result table to plot")
            p.add_argument(
                "--kind", required=True, choices=["overlap", "variance", "collapse"]
            )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InvariantViolation, DegenerateGapError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return 4
    except EigsensError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
