"""Flat `key = value` configuration files for sweep runs.

Lists use `[a, b, c]`; booleans are `true`/`false`; `trials = auto`
selects the per-N default; the token `full` in `k_multipliers` denotes
the complete pair set.  Unknown keys are rejected with their line
number, and emitting then re-parsing a config is the identity.
"""

from __future__ import annotations

import math
from dataclasses import replace

from .ensemble import EntrySpec
from .errors import ConfigError
from .experiments import SweepConfig


def _parse_scalar(token: str, kind: str, where: str):
    token = token.strip()
    try:
        if kind == "int":
            return int(token)
        if kind == "float":
            return float(token)
        if kind == "multiplier":
            return math.inf if token == "full" else float(token)
        if kind == "bool":
            if token in ("true", "false"):
                return token == "true"
            raise ValueError
        if kind == "str":
            return token
    except ValueError:
        pass
    raise ConfigError(f"{where}: cannot parse {token!r} as {kind}")


def _parse_value(raw: str, kind: str, where: str):
    raw = raw.strip()
    if kind.startswith("list:"):
        if not (raw.startswith("[") and raw.endswith("]")):
            raise ConfigError(f"{where}: expected a [..] list, got {raw!r}")
        inner = raw[1:-1].strip()
        if not inner:
            return ()
        return tuple(_parse_scalar(tok, kind[5:], where) for tok in inner.split(","))
    if kind == "optint":
        return None if raw == "auto" else _parse_scalar(raw, "int", where)
    return _parse_scalar(raw, kind, where)


_SCHEMA = {
    "N_list": "list:int",
    "k_multipliers": "list:multiplier",
    "k_values": "list:int",
    "trials": "optint",
    "seed": "int",
    "offdiag_dist": "str",
    "diag_sigma0": "float",
    "tail_delta": "float",
    "threads": "int",
    "tol": "float",
    "quantiles": "bool",
    "drift_k_values": "list:int",
    "flip_pairs": "int",
}


def parse_config_text(text: str, source: str = "<config>") -> SweepConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        where = f"{source}:{lineno}"
        if "=" not in stripped:
            raise ConfigError(f"{where}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        values[key] = _parse_value(raw, _SCHEMA[key], where)

    entry_kwargs = {}
    for cfg_key, spec_key in (
        ("offdiag_dist", "offdiag_dist"),
        ("diag_sigma0", "diag_sigma0"),
        ("tail_delta", "tail_delta"),
    ):
        if cfg_key in values:
            entry_kwargs[spec_key] = values.pop(cfg_key)
    try:
        entry = EntrySpec(**entry_kwargs)
        if "seed" in values:
            values["master_seed"] = values.pop("seed")
        return SweepConfig(entry=entry, **values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: invalid configuration: {exc}") from exc


def parse_config(path) -> SweepConfig:
    """Read and validate a config file, filling defaults."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


def _fmt(value, kind: str) -> str:
    if kind.startswith("list:"):
        return "[" + ", ".join(_fmt(v, kind[5:]) for v in value) + "]"
    if kind == "multiplier":
        return "full" if value == math.inf else f"{value:.17g}"
    if kind == "float":
        return f"{value:.17g}"
    if kind == "bool":
        return "true" if value else "false"
    if kind == "optint":
        return "auto" if value is None else str(value)
    return str(value)


def emit_config(cfg: SweepConfig) -> str:
    """Canonical text form; parse_config_text(emit_config(cfg)) == cfg."""
    fields = {
        "N_list": cfg.N_list,
        "k_multipliers": cfg.k_multipliers,
        "k_values": cfg.k_values,
        "trials": cfg.trials,
        "seed": cfg.master_seed,
        "offdiag_dist": cfg.entry.offdiag_dist,
        "diag_sigma0": cfg.entry.diag_sigma0,
        "tail_delta": cfg.entry.tail_delta,
        "threads": cfg.threads,
        "tol": cfg.tol,
        "quantiles": cfg.quantiles,
        "drift_k_values": cfg.drift_k_values,
        "flip_pairs": cfg.flip_pairs,
    }
    return "".join(f"{key} = {_fmt(value, _SCHEMA[key])}\n" for key, value in fields.items())


def override(cfg: SweepConfig, seed=None, trials=None, threads=None) -> SweepConfig:
    """Apply CLI-level overrides onto a parsed config."""
    updates = {}
    if seed is not None:
        updates["master_seed"] = seed
    if trials is not None:
        updates["trials"] = trials
    if threads is not None:
        updates["threads"] = threads
    return replace(cfg, **updates) if updates else cfg
