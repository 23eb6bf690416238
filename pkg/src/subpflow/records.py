"""JSON-lines and CSV emission with a fixed float format."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable

import numpy as np

SCHEMA = "subpflow/1"
FLOAT_FORMAT = "%.17g"


def format_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return FLOAT_FORMAT % x


def dumps(obj) -> str:
    """Compact JSON with every float written to 17 significant digits; key order is preserved."""
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    if hasattr(obj, "to_dict"):
        return dumps(obj.to_dict())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_jsonl(path, records: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps(rec) + "\n")
    return path


def read_jsonl(path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    if isinstance(v, (dict, list, tuple)):
        return dumps(v)
    return str(v)


def write_csv(path, rows: list[dict], fields: list[str] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fields is None:
        fields = []
        for row in rows:
            fields.extend(k for k in row if k not in fields)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([_cell(row.get(k)) for k in fields])
    return path


def record(kind: str, **fields) -> dict:
    return {"schema": SCHEMA, "kind": kind, **fields}


def estimate_record(rep) -> dict:
    return record(
        "estimate",
        name=rep.name,
        p=rep.params["p"],
        delta=rep.params["delta"],
        beta=rep.beta,
        lhs=rep.lhs,
        rhs_terms=rep.rhs_terms,
        empirical_C=rep.empirical_C,
        prefactor=rep.prefactor,
        intermediates=rep.intermediates,
        grid=rep.params["grid"],
        cylinder=rep.params["cylinder"],
    )


def estimate_row(rep) -> dict:
    row = {
        "name": rep.name, "p": rep.params["p"], "delta": rep.params["delta"], "beta": rep.beta,
        "m": rep.params["grid"]["m"], "r": rep.params["cylinder"]["r"],
        "lhs": rep.lhs, "rhs_total": rep.rhs_total, "empirical_C": rep.empirical_C,
        "prefactor": rep.prefactor,
    }
    return row


def solution_record(sol, status: str = "ok") -> dict:
    diag = sol.diagnostics
    energy = diag.get("energy", [])
    return record(
        "solve",
        status=status,
        p=sol.flux.p,
        delta=sol.flux.delta,
        flux=sol.flux.to_dict(),
        grid=sol.grid.to_dict(),
        steps=len(sol.dt_history),
        t_final=float(sol.times[-1]),
        dt_min=min(sol.dt_history) if sol.dt_history else None,
        dt_max=max(sol.dt_history) if sol.dt_history else None,
        energy_initial=energy[0] if energy else None,
        energy_final=energy[-1] if energy else None,
        max_abs_final=diag["max_abs"][-1] if diag.get("max_abs") else None,
        instability_threshold=diag.get("instability_threshold"),
    )


def diagnostics_rows(sol) -> list[dict]:
    d = sol.diagnostics
    return [
        {"step": k, "t": t, "max_abs": a, "energy": e}
        for k, (t, a, e) in enumerate(zip(d.get("t", []), d.get("max_abs", []), d.get("energy", [])))
    ]
