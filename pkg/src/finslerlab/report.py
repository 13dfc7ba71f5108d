"""Report records and deterministic CSV/JSON emission.

Records are flat rows (scenario, quantity, value, error, status, claim,
provenance, witness). Status is "pass"/"fail" for gated assertions,
"info" for informational quantities and downgraded checks. Emission is
byte-stable: fixed column order, 12 significant digits, sorted witness
keys, no timestamps.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInput, IoFailure

SCHEMA_VERSION = 1
CSV_COLUMNS = ["scenario", "quantity", "claim", "value", "error", "status", "provenance", "witness"]


@dataclass
class ReportRecord:
    scenario: str
    quantity: str
    value: float
    error: float = 0.0
    status: str = "info"  # pass | fail | info
    claim: str = ""
    provenance: str = "quadrature"  # closed-form | quadrature | fit
    witness: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in ("pass", "fail", "info"):
            raise ValueError(f"bad status {self.status!r}")
        if self.status == "fail" and not self.witness:
            raise ValueError("failing records must carry a witness")


def _fmt(x) -> str:
    if x is None:
        return ""
    return f"{float(x):.12g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(f"{float(obj):.12g}")
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def records_to_json(records, scenario_meta=None) -> str:
    if not records:
        raise EmptyInput("refusing to emit an empty report")
    payload = {
        "schema_version": SCHEMA_VERSION,
        "meta": _jsonable(scenario_meta or {}),
        "records": [
            {
                "scenario": r.scenario,
                "quantity": r.quantity,
                "claim": r.claim,
                "value": _jsonable(r.value),
                "error": _jsonable(r.error),
                "status": r.status,
                "provenance": r.provenance,
                "witness": _jsonable(r.witness),
            }
            for r in records
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def records_from_json(text: str):
    payload = json.loads(text)
    out = []
    for row in payload["records"]:
        out.append(
            ReportRecord(
                scenario=row["scenario"],
                quantity=row["quantity"],
                value=row["value"],
                error=row["error"],
                status=row["status"],
                claim=row["claim"],
                provenance=row["provenance"],
                witness=row["witness"],
            )
        )
    return out


def records_to_csv(records) -> str:
    if not records:
        raise EmptyInput("refusing to emit an empty report")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow(
            [
                r.scenario,
                r.quantity,
                r.claim,
                _fmt(r.value),
                _fmt(r.error),
                r.status,
                r.provenance,
                json.dumps(_jsonable(r.witness), sort_keys=True, separators=(",", ":")),
            ]
        )
    return buf.getvalue()


def emit_report(records, out_dir, basename, formats=("csv", "json"), scenario_meta=None):
    """Write the report files; returns the paths written."""
    if not records:
        raise EmptyInput("refusing to emit an empty report")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        if "csv" in formats:
            p = out_dir / f"{basename}.csv"
            p.write_text(records_to_csv(records))
            paths.append(p)
        if "json" in formats:
            p = out_dir / f"{basename}.json"
            p.write_text(records_to_json(records, scenario_meta=scenario_meta))
            paths.append(p)
    except OSError as exc:
        raise IoFailure(f"cannot write report to {out_dir}: {exc}") from exc
    return paths


def all_gated_pass(records) -> bool:
    return all(r.status != "fail" for r in records)
