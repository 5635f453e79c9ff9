"""Result tables and run manifests.

The CSV schema is fixed: `experiment,N,k,multiplier,statistic,mean,
stderr,trials,excluded`, floats serialized with 17 significant digits so
parsing a written table reproduces the rows exactly.  The manifest is a
JSON sidecar echoing the full config; re-running from that echo with the
recorded seed regenerates byte-identical CSVs.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .errors import ConfigError, DomainError
from .experiments import ResultRow, invalid_cells

CSV_HEADER = "experiment,N,k,multiplier,statistic,mean,stderr,trials,excluded"

TOOL_VERSION = "0.1.0"


def _fmt_float(x: float) -> str:
    return f"{float(x):.17g}"


def rows_to_csv(rows: Sequence[ResultRow]) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                (
                    r.experiment,
                    str(r.N),
                    str(r.k),
                    _fmt_float(r.multiplier),
                    r.statistic,
                    _fmt_float(r.mean),
                    _fmt_float(r.stderr),
                    str(r.trials),
                    str(r.excluded),
                )
            )
        )
    return "\n".join(lines) + "\n"


def parse_results_text(text: str, source: str = "<csv>") -> list:
    lines = text.splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise DomainError(f"{source}: missing or wrong CSV header")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 9:
            raise DomainError(f"{source}:{lineno}: expected 9 fields, got {len(parts)}")
        rows.append(
            ResultRow(
                experiment=parts[0],
                N=int(parts[1]),
                k=int(parts[2]),
                multiplier=float(parts[3]),
                statistic=parts[4],
                mean=float(parts[5]),
                stderr=float(parts[6]),
                trials=int(parts[7]),
                excluded=int(parts[8]),
            )
        )
    return rows


def read_results(path) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_results_text(fh.read(), source=str(path))


@dataclass
class RunManifest:
    """Provenance record for one run: config echo, seed, tool version,
    timestamps, per-cell exclusions, and the files written."""

    experiment: str
    config_text: str
    master_seed: int
    version: str = TOOL_VERSION
    started: str = ""
    finished: str = ""
    excluded: dict = field(default_factory=dict)
    invalid_cells: list = field(default_factory=list)
    outputs: list = field(default_factory=list)

    @classmethod
    def for_run(cls, experiment, config_text, master_seed, started="") -> "RunManifest":
        return cls(
            experiment=experiment,
            config_text=config_text,
            master_seed=master_seed,
            started=started,
        )

    def record_rows(self, rows: Sequence[ResultRow]):
        for row in rows:
            if row.excluded:
                key = f"{row.experiment}:N={row.N},k={row.k}"
                self.excluded[key] = row.excluded
        self.invalid_cells = [
            f"{exp}:N={n},k={k},m={m:g}" for exp, n, k, m in invalid_cells(rows)
        ]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def _atomic_write(path, data: str):
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_manifest")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_results(rows: Sequence[ResultRow], manifest: RunManifest, out_dir) -> list:
    """Write `<experiment>.csv` plus `<experiment>_manifest.json` under
    out_dir; the manifest is written atomically, after the table."""
    os.makedirs(out_dir, exist_ok=True)
    csv_name = f"{manifest.experiment}.csv"
    csv_path = os.path.join(out_dir, csv_name)
    try:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(rows_to_csv(rows))
    except OSError as exc:
        raise ConfigError(f"cannot write results to {csv_path}: {exc}") from exc
    manifest.record_rows(rows)
    if csv_name not in manifest.outputs:
        manifest.outputs.append(csv_name)
    manifest_path = os.path.join(out_dir, f"{manifest.experiment}_manifest.json")
    _atomic_write(manifest_path, manifest.to_json())
    return [csv_path, manifest_path]
