"""Panel and aggregates file schemas, derived columns, and report documents.

The panel CSV holds one firm-year per row.  Monetary columns are in thousands
of constant-price currency (the synthetic generator emits them in units of
the fixed production cost); workers are in thousands.

    firm_id, year, dom_revenue, export_revenue, total_wage, intermediates,
    workers, new_product_value, fixed_assets_net[, processing_flag][, state]

The aggregates CSV has one row per year:

    year, gni_pc_home, gni_pc_world, dwto

Reports are JSON documents with a schema_version field, written with sorted
keys and fixed indentation so runs with the same seed are byte-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pandas as pd

REQUIRED_COLUMNS = [
    "firm_id",
    "year",
    "dom_revenue",
    "export_revenue",
    "total_wage",
    "intermediates",
    "workers",
    "new_product_value",
    "fixed_assets_net",
]
OPTIONAL_COLUMNS = ["processing_flag", "state"]
AGGREGATE_COLUMNS = ["year", "gni_pc_home", "gni_pc_world", "dwto"]

REPORT_SCHEMA_VERSION = 1


class SchemaError(ValueError):
    """A panel or aggregates file violates its schema; carries the line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


def _check_rows(frame: pd.DataFrame, checks) -> None:
    """Run (column, predicate, message) checks; report the first offending
    CSV line (header is line 1)."""
    for column, ok, message in checks:
        bad = ~ok
        if bad.any():
            line = int(np.flatnonzero(bad.to_numpy())[0]) + 2
            raise SchemaError(f"{column}: {message}", line=line)


def read_panel(path) -> pd.DataFrame:
    """Read and validate a panel CSV."""
    frame = pd.read_csv(path)
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"missing required columns: {', '.join(missing)}", line=1)
    unknown = [c for c in frame.columns if c not in REQUIRED_COLUMNS + OPTIONAL_COLUMNS]
    if unknown:
        raise SchemaError(f"unknown columns: {', '.join(unknown)}", line=1)
    for c in REQUIRED_COLUMNS[1:] + [c for c in OPTIONAL_COLUMNS if c in frame.columns]:
        if not pd.api.types.is_numeric_dtype(frame[c]):
            bad = pd.to_numeric(frame[c], errors="coerce").isna() & frame[c].notna()
            line = int(np.flatnonzero(bad.to_numpy())[0]) + 2 if bad.any() else 1
            raise SchemaError(f"{c}: non-numeric value", line=line)
    _check_rows(
        frame,
        [
            ("year", frame["year"] == frame["year"].astype(int), "must be an integer"),
            ("dom_revenue", frame["dom_revenue"] > 0, "must be strictly positive"),
            ("export_revenue", frame["export_revenue"] >= 0, "must be nonnegative"),
            ("total_wage", frame["total_wage"] >= 0, "must be nonnegative"),
            ("intermediates", frame["intermediates"] >= 0, "must be nonnegative"),
            ("workers", frame["workers"] > 0, "must be strictly positive"),
            ("new_product_value", frame["new_product_value"] >= 0, "must be nonnegative"),
            ("fixed_assets_net", frame["fixed_assets_net"] >= 0, "must be nonnegative"),
        ],
    )
    if "processing_flag" in frame.columns:
        _check_rows(
            frame,
            [("processing_flag", frame["processing_flag"].isin([0, 1]), "must be 0/1")],
        )
    if "state" in frame.columns:
        _check_rows(
            frame,
            [("state", (frame["state"] == frame["state"].astype(int)) & (frame["state"] >= 1), "must be an integer state index >= 1")],
        )
        frame["state"] = frame["state"].astype(int)
    frame["year"] = frame["year"].astype(int)
    dup = frame.duplicated(subset=["firm_id", "year"])
    if dup.any():
        raise SchemaError("duplicate (firm_id, year) row", line=int(np.flatnonzero(dup.to_numpy())[0]) + 2)
    return frame


def read_aggregates(path) -> pd.DataFrame:
    """Read and validate an aggregates CSV."""
    frame = pd.read_csv(path)
    missing = [c for c in AGGREGATE_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"missing required columns: {', '.join(missing)}", line=1)
    _check_rows(
        frame,
        [
            ("year", frame["year"] == frame["year"].astype(int), "must be an integer"),
            ("gni_pc_home", frame["gni_pc_home"] > 0, "must be strictly positive"),
            ("gni_pc_world", frame["gni_pc_world"] > 0, "must be strictly positive"),
            ("dwto", frame["dwto"].isin([0, 1]), "must be 0/1"),
        ],
    )
    frame["year"] = frame["year"].astype(int)
    frame["dwto"] = frame["dwto"].astype(int)
    if frame["year"].duplicated().any():
        raise SchemaError("duplicate year row")
    return frame


def _format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, frame: pd.DataFrame) -> None:
    """Write a DataFrame as CSV with shortest-round-trip float formatting, so
    equal inputs produce byte-identical files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(list(frame.columns))
        for row in frame.itertuples(index=False):
            writer.writerow([_format_cell(v) for v in row])


def write_panel(path, panel: pd.DataFrame) -> None:
    columns = [c for c in REQUIRED_COLUMNS + OPTIONAL_COLUMNS if c in panel.columns]
    write_csv(path, panel[columns])


def write_aggregates(path, aggregates: pd.DataFrame) -> None:
    write_csv(path, aggregates[AGGREGATE_COLUMNS])


def derive_columns(panel: pd.DataFrame) -> pd.DataFrame:
    """Attach the derived columns used downstream.

    tvc = total wage + intermediates; wm = tvc per worker; chi1/chi2 from
    positive new-product value and export revenue; lag1/lag2 from the same
    firm's previous calendar year, NaN when that year is absent (first
    observed year or a gap in the sample window); has_lag flags defined lags.
    """
    out = panel.copy()
    out["tvc"] = out["total_wage"] + out["intermediates"]
    out["wm"] = out["tvc"] / out["workers"]
    out["chi1"] = (out["new_product_value"] > 0).astype(int)
    out["chi2"] = (out["export_revenue"] > 0).astype(int)
    prev = out[["firm_id", "year", "chi1", "chi2"]].copy()
    prev["year"] = prev["year"] + 1
    prev = prev.rename(columns={"chi1": "lag1", "chi2": "lag2"})
    out = out.merge(prev, on=["firm_id", "year"], how="left")
    out["has_lag"] = out["lag1"].notna()
    return out


def save_json(path, payload: dict) -> None:
    """Write a JSON document deterministically (sorted keys, fixed indent)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as handle:
        json.dump(_to_plain(payload), handle, indent=2, sort_keys=True)
        handle.write("\n")


def load_json(path) -> dict:
    with open(path) as handle:
        return json.load(handle)


def _to_plain(obj):
    """Recursively convert numpy scalars/arrays so json can serialize them."""
    if isinstance(obj, dict):
        return {str(k): _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj
