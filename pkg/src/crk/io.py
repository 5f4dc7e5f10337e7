"""CSV ingestion and report serialization for the command-line surface.

Input files are UTF-8 comma-separated with a header row and '.' decimal
points.  Schemas:

  within_quantile   cluster,y
  within_qr         cluster,y,x1[,x2,...]
  between_pairs     cluster,y,d[,x1,...]        d in {0,1}, constant per cluster
  panel_qdid wide   cluster,d,y_m1,y_0,y_1      one row per unit
  panel_qdid long   cluster,unit,d,t,y          t in {-1,0,1}, one row per unit-period

Row order is preserved within clusters; cluster order is first
appearance.  Validation errors cite the offending file line.
"""

import csv
import json
import re
from pathlib import Path

import numpy as np

from .qdid import PanelSample
from .within import Cluster, ClusterDataset

SCHEMA_VERSION = 1

_SCHEMAS = ("within_quantile", "within_qr", "between_pairs", "panel_qdid")


class CsvFormatError(ValueError):
    """Malformed input file; message cites the file line."""


def parse_grid(text: str) -> tuple[float, ...]:
    """Grid flag syntax: 'lo:hi:step' or an explicit comma list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid range must be lo:hi:step, got {text!r}")
        lo, hi, step = (float(v) for v in parts)
        if step <= 0 or hi < lo:
            raise ValueError(f"bad grid range {text!r}")
        points = np.arange(lo, hi + step / 2.0, step)
    else:
        points = np.array([float(v) for v in text.split(",") if v.strip() != ""])
    return tuple(float(v) for v in np.round(points, 12))


def parse_null(text: str):
    """Null flag: a single constant or a comma list matching the grid."""
    values = [float(v) for v in text.split(",") if v.strip() != ""]
    if not values:
        raise ValueError("empty null specification")
    return values[0] if len(values) == 1 else tuple(values)


def _read_rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        rows = [[cell.strip() for cell in row] for row in reader]
    return header, rows


def _float_cell(value: str, column: str, line: int, path) -> float:
    try:
        out = float(value)
    except ValueError:
        raise CsvFormatError(
            f"{path}: line {line}: non-numeric value {value!r} in column {column!r}"
        ) from None
    if not np.isfinite(out):
        raise CsvFormatError(
            f"{path}: line {line}: non-finite value in column {column!r}"
        )
    return out


def _columns(header, required, path):
    missing = [c for c in required if c not in header]
    if missing:
        raise CsvFormatError(f"{path}: header is missing column(s) {missing}")
    return {name: header.index(name) for name in header}


def _covariate_names(header) -> list[str]:
    names = [h for h in header if re.fullmatch(r"x\d+", h)]
    return sorted(names, key=lambda h: int(h[1:]))


def load_csv(path, schema: str):
    """Load any supported schema; panel_qdid yields PanelSamples."""
    if schema not in _SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}; choose from {_SCHEMAS}")
    if schema == "panel_qdid":
        return load_panel_csv(path)
    return load_cluster_csv(path, schema)


def load_cluster_csv(path, schema: str) -> ClusterDataset:
    """Read a long-format outcome file into a ClusterDataset."""
    if schema not in ("within_quantile", "within_qr", "between_pairs"):
        raise ValueError(f"unknown cluster schema {schema!r}")
    header, rows = _read_rows(path)
    required = ["cluster", "y"]
    if schema == "between_pairs":
        required.append("d")
    cols = _columns(header, required, path)
    xnames = _covariate_names(header)
    if schema == "within_qr" and not xnames:
        raise CsvFormatError(f"{path}: schema within_qr needs x1..xp columns")

    order: list[str] = []
    y_by: dict[str, list[float]] = {}
    x_by: dict[str, list[list[float]]] = {}
    d_by: dict[str, list[bool]] = {}
    for i, row in enumerate(rows):
        line = i + 2
        if len(row) != len(header):
            raise CsvFormatError(
                f"{path}: line {line}: expected {len(header)} cells, got {len(row)}"
            )
        cid = row[cols["cluster"]]
        if cid == "":
            raise CsvFormatError(f"{path}: line {line}: empty cluster id")
        if cid not in y_by:
            order.append(cid)
            y_by[cid] = []
            x_by[cid] = []
            d_by[cid] = []
        y_by[cid].append(_float_cell(row[cols["y"]], "y", line, path))
        if xnames:
            x_by[cid].append(
                [_float_cell(row[cols[x]], x, line, path) for x in xnames]
            )
        if schema == "between_pairs":
            d = _float_cell(row[cols["d"]], "d", line, path)
            if d not in (0.0, 1.0):
                raise CsvFormatError(
                    f"{path}: line {line}: treatment indicator must be 0 or 1"
                )
            d_by[cid].append(bool(d))
    if not order:
        raise CsvFormatError(f"{path}: no data rows")

    clusters = []
    for cid in order:
        covs = np.array(x_by[cid]) if xnames else None
        treated = np.array(d_by[cid]) if schema == "between_pairs" else None
        clusters.append(
            Cluster(cluster_id=cid, y=np.array(y_by[cid]), covariates=covs, treated=treated)
        )
    return ClusterDataset(clusters=tuple(clusters))


def load_panel_csv(path) -> dict[str, PanelSample]:
    """Read a three-period panel (wide or long layout) into PanelSamples."""
    header, rows = _read_rows(path)
    wide = {"y_m1", "y_0", "y_1"}.issubset(header)
    if wide:
        cols = _columns(header, ["cluster", "d", "y_m1", "y_0", "y_1"], path)
        order: list[str] = []
        outcomes: dict[str, list[list[float]]] = {}
        dflag: dict[str, bool] = {}
        for i, row in enumerate(rows):
            line = i + 2
            cid = row[cols["cluster"]]
            if cid not in outcomes:
                order.append(cid)
                outcomes[cid] = []
                dflag[cid] = None
            d = _float_cell(row[cols["d"]], "d", line, path)
            if d not in (0.0, 1.0):
                raise CsvFormatError(
                    f"{path}: line {line}: treatment indicator must be 0 or 1"
                )
            if dflag[cid] is None:
                dflag[cid] = bool(d)
            elif dflag[cid] != bool(d):
                raise CsvFormatError(
                    f"{path}: line {line}: treatment flips within cluster {cid!r}"
                )
            outcomes[cid].append(
                [
                    _float_cell(row[cols[c]], c, line, path)
                    for c in ("y_m1", "y_0", "y_1")
                ]
            )
        if not order:
            raise CsvFormatError(f"{path}: no data rows")
        return {
            cid: PanelSample(outcomes=np.array(outcomes[cid]), treated=dflag[cid])
            for cid in order
        }

    cols = _columns(header, ["cluster", "unit", "t", "y", "d"], path)
    per_unit: dict[tuple[str, str], dict[int, float]] = {}
    dflag = {}
    order = []
    unit_order: dict[str, list[str]] = {}
    for i, row in enumerate(rows):
        line = i + 2
        cid = row[cols["cluster"]]
        unit = row[cols["unit"]]
        t = _float_cell(row[cols["t"]], "t", line, path)
        if t not in (-1.0, 0.0, 1.0):
            raise CsvFormatError(f"{path}: line {line}: period must be -1, 0, or 1")
        d = _float_cell(row[cols["d"]], "d", line, path)
        if d not in (0.0, 1.0):
            raise CsvFormatError(
                f"{path}: line {line}: treatment indicator must be 0 or 1"
            )
        if cid not in unit_order:
            order.append(cid)
            unit_order[cid] = []
            dflag[cid] = bool(d)
        elif dflag[cid] != bool(d):
            raise CsvFormatError(
                f"{path}: line {line}: treatment flips within cluster {cid!r}"
            )
        key = (cid, unit)
        if key not in per_unit:
            unit_order[cid].append(unit)
            per_unit[key] = {}
        if int(t) in per_unit[key]:
            raise CsvFormatError(
                f"{path}: line {line}: duplicate period {int(t)} for unit {unit!r}"
            )
        per_unit[key][int(t)] = _float_cell(row[cols["y"]], "y", line, path)
    if not order:
        raise CsvFormatError(f"{path}: no data rows")
    panels = {}
    for cid in order:
        mat = []
        for unit in unit_order[cid]:
            triple = per_unit[(cid, unit)]
            if set(triple) != {-1, 0, 1}:
                raise CsvFormatError(
                    f"{path}: unit {unit!r} in cluster {cid!r} is missing periods"
                )
            mat.append([triple[-1], triple[0], triple[1]])
        panels[cid] = PanelSample(outcomes=np.array(mat), treated=dflag[cid])
    return panels


def dataset_to_csv(data: ClusterDataset, path):
    """Serialize a ClusterDataset back to the long CSV layout."""
    has_cov = data.clusters[0].covariates is not None
    has_d = data.clusters[0].treated is not None
    k = data.clusters[0].covariates.shape[1] if has_cov else 0
    header = ["cluster", "y"] + (["d"] if has_d else []) + [f"x{i+1}" for i in range(k)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for cluster in data.clusters:
            for i in range(cluster.n):
                row = [cluster.cluster_id, repr(float(cluster.y[i]))]
                if has_d:
                    row.append(str(int(cluster.treated[i])))
                if has_cov:
                    row.extend(repr(float(v)) for v in cluster.covariates[i])
                writer.writerow(row)


def write_json_report(path, command: str, config: dict, result: dict):
    """Versioned run report; config echoes every resolved setting."""
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "result": result,
    }
    text = json.dumps(payload, indent=2, sort_keys=True, default=_json_default)
    if path is None:
        return text
    Path(path).write_text(text + "\n", encoding="utf-8")
    return text


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")
