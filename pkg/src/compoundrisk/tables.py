"""Plot-ready output tables in CSV and JSON with a fixed number format."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

FLOAT_FORMAT = ".10g"


def _clean(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
        r = float(format(v, FLOAT_FORMAT))
        # rounding can overflow next to the largest finite double
        return r if math.isfinite(r) else v
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(x) for x in v]
    if isinstance(v, Path):
        return str(v)
    return v


def format_cell(v) -> str:
    v = _clean(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        s = format(v, FLOAT_FORMAT)
        return s if math.isfinite(float(s)) else repr(v)
    return str(v)


def columns_of(rows) -> list:
    cols = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    return cols


def write_csv(path, rows, columns=None) -> Path:
    path = Path(path)
    rows = list(rows)
    columns = list(columns or columns_of(rows))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([format_cell(r.get(c)) for c in columns])
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_clean(obj), indent=1, sort_keys=True) + "\n")
    return path


def write_table(outdir, name, rows, columns=None) -> list[Path]:
    """Same rows as <name>.csv and <name>.json (a list of records)."""
    outdir = Path(outdir)
    rows = list(rows)
    columns = list(columns or columns_of(rows))
    records = [{c: r.get(c) for c in columns} for r in rows]
    return [write_csv(outdir / f"{name}.csv", rows, columns), write_json(outdir / f"{name}.json", records)]


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _is_number(s) -> bool:
    if s in ("", None):
        return False
    try:
        float(s)
    except (TypeError, ValueError):
        return False
    return True


def long_form(rows, id_columns=None) -> list[dict]:
    """Melt a wide table: one (id columns..., variable, value) row per numeric cell.

    Without explicit id columns, every column with a non-numeric entry is
    an id column, plus the first column. Empty cells are skipped.
    """
    rows = list(rows)
    cols = columns_of(rows)
    if id_columns is None:
        id_columns = [c for c in cols if any(r.get(c) not in ("", None) and not _is_number(r.get(c))
                                             for r in rows)]
        if cols and cols[0] not in id_columns:
            id_columns.insert(0, cols[0])
    else:
        missing = set(id_columns) - set(cols)
        if missing:
            raise KeyError(f"id columns not in table: {sorted(missing)}")
    id_columns = [c for c in cols if c in id_columns]
    out = []
    for r in rows:
        base = {c: r.get(c) for c in id_columns}
        for c in cols:
            if c in id_columns or r.get(c) in ("", None):
                continue
            out.append({**base, "variable": c, "value": r.get(c)})
    return out
