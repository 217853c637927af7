"""Published coverage tables shipped as package data, for comparison reports."""
from __future__ import annotations

import json
import math
from functools import lru_cache
from importlib import resources

__all__ = ["TABLES", "REPORT_TOLERANCE", "load_reference", "reference_value", "compare_rows"]

TABLES = ("table1", "table2", "table3")
# absolute coverage difference flagged by `compare_rows`
REPORT_TOLERANCE = 0.03


@lru_cache(maxsize=1)
def load_reference() -> dict:
    text = resources.files("dblboot").joinpath("data/reference_tables.json").read_text()
    return json.loads(text)


def table_estimator(table: str) -> str:
    return load_reference()["tables"][table]["estimator"]


def reference_value(table: str, model: str, method: str, n: int, alpha: float) -> float | None:
    """Published coverage, or None if the table has no such cell."""
    ref = load_reference()
    if table not in ref["tables"]:
        raise KeyError(f"unknown reference table {table!r}")
    cov = ref["tables"][table]["coverage"]
    try:
        row = cov[model][method][str(int(n))]
    except KeyError:
        return None
    for a, v in zip(ref["alphas"], row):
        if math.isclose(a, alpha, abs_tol=1e-9):
            return v
    return None


def compare_rows(rows, table: str, tolerance: float = REPORT_TOLERANCE) -> list[dict]:
    """
    Match study CSV rows against a published table.

    Rows for other estimators, or cells absent from the table, are skipped.
    """
    est = table_estimator(table)
    out = []
    for r in rows:
        if r["estimator"] != est:
            continue
        alpha = float(r["alpha"])
        ref = reference_value(table, r["model"], r["method"], int(r["n"]), alpha)
        if ref is None:
            continue
        cov = float(r["coverage"])
        diff = cov - ref
        out.append(
            {
                "model": r["model"],
                "method": r["method"],
                "n": int(r["n"]),
                "alpha": alpha,
                "coverage": cov,
                "reference": ref,
                "diff": diff,
                "flag": not abs(diff) <= tolerance,
            }
        )
    return out
