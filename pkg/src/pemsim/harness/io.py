"""CSV/JSON persistence of run records and cell summaries."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from typing import Iterable, Sequence

from .. import __version__, kernels
from ..metrics import ExperimentSummary
from .config import Cell
from .runner import RunRecord

LEAD_COLUMNS = ("cell_id", "run_index", "seed", "scenario", "scenario_id", "scenario_params", "pem")
METRIC_COLUMNS = ("min_spatial_m", "min_temporal_s", "collided", "detection_freq", "max_nondetect_s", "outcome")
EXTRA_COLUMNS = ("min_ttc_s", "vel_unknown_frac", "anomaly")
_FLOATS = ("min_spatial_m", "min_temporal_s", "detection_freq", "max_nondetect_s", "min_ttc_s", "vel_unknown_frac")


def fmt_float(x: float | None) -> str:
    if x is None:
        return ""
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6g}"


def _parse_float(s: str) -> float | None:
    return None if s == "" else float(s)


def _fmt_params(params) -> str:
    return ";".join(f"{k}={fmt_float(v)}" for k, v in params)


def _parse_params(s: str) -> tuple[tuple[str, float], ...]:
    if not s:
        return ()
    out = []
    for item in s.split(";"):
        k, _, v = item.partition("=")
        out.append((k, float(v)))
    return tuple(out)


def csv_columns(pem_vars: Sequence[str]) -> list[str]:
    return [*LEAD_COLUMNS, *pem_vars, *METRIC_COLUMNS, *EXTRA_COLUMNS]


def records_to_csv(records: Iterable[RunRecord], pem_vars: Sequence[str] | None = None) -> str:
    """Render records as CSV text, sorted by (cell_id, run_index)."""
    records = sorted(records, key=lambda r: r.key)
    if not records:
        raise ValueError("no records to write")
    if pem_vars is None:
        pem_vars = sorted({k for r in records for k, _ in r.pem_params})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_columns(pem_vars))
    for r in records:
        pp = dict(r.pem_params)
        w.writerow([
            r.cell_id, r.run_index, r.seed, r.scenario, r.scenario_id, _fmt_params(r.scenario_params), r.pem,
            *(fmt_float(pp.get(v)) for v in pem_vars),
            fmt_float(r.min_spatial_m), fmt_float(r.min_temporal_s), int(r.collided),
            fmt_float(r.detection_freq), fmt_float(r.max_nondetect_s), r.outcome,
            fmt_float(r.min_ttc_s), fmt_float(r.vel_unknown_frac), r.anomaly,
        ])
    return buf.getvalue()


def emit_csv(records: Iterable[RunRecord], path, pem_vars: Sequence[str] | None = None) -> None:
    text = records_to_csv(records, pem_vars)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def parse_csv(text: str) -> list[RunRecord]:
    rows = list(csv.reader(io.StringIO(text, newline="")))
    if not rows:
        raise ValueError("empty CSV")
    header = rows[0]
    lead = list(header[:len(LEAD_COLUMNS)])
    if lead != list(LEAD_COLUMNS):
        raise ValueError(f"unexpected CSV header: {header[:len(LEAD_COLUMNS)]}")
    tail = len(METRIC_COLUMNS) + len(EXTRA_COLUMNS)
    pem_vars = header[len(LEAD_COLUMNS):len(header) - tail]
    if header[len(header) - tail:] != [*METRIC_COLUMNS, *EXTRA_COLUMNS]:
        raise ValueError("unexpected CSV header tail")
    out = []
    for row in rows[1:]:
        d = dict(zip(header, row))
        pp = tuple((v, float(d[v])) for v in pem_vars if d[v] != "")
        out.append(RunRecord(
            d["cell_id"], int(d["run_index"]), int(d["seed"]), d["scenario"], d["scenario_id"],
            _parse_params(d["scenario_params"]), d["pem"], pp,
            *(_parse_float(d[c]) for c in ("min_spatial_m", "min_temporal_s")),
            d["collided"] == "1",
            _parse_float(d["detection_freq"]), _parse_float(d["max_nondetect_s"]), d["outcome"],
            _parse_float(d["min_ttc_s"]), _parse_float(d["vel_unknown_frac"]), d["anomaly"],
        ))
    return out


def read_csv(path) -> list[RunRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_csv(fh.read())


def read_table(path) -> tuple[list[str], list[dict[str, str]]]:
    """Generic CSV reader for plotting any numeric column."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        return list(reader.fieldnames or []), rows


# --------------------------------------------------------------------------
# Summaries and manifest
# --------------------------------------------------------------------------

SUMMARY_STATS = (("min_spatial_clearance", "min_spatial_m"), ("min_temporal_clearance", "min_temporal_s"),
                 ("min_ttc", "min_ttc_s"), ("detection_frequency", "detection_freq"),
                 ("max_nondetection_interval", "max_nondetect_s"), ("velocity_unknown_fraction", "vel_unknown_frac"))


def summaries_to_csv(summaries: Sequence[tuple[Cell, ExperimentSummary]], pem_vars: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    stat_cols = [f"{short}_{q}" for _, short in SUMMARY_STATS for q in ("min", "q1", "median", "q3", "max")]
    w.writerow(["cell_id", "scenario", "scenario_id", "scenario_params", "pem", *pem_vars,
                "runs", "success_rate", "collisions", "anomalies", *stat_cols])
    for cell, s in summaries:
        pp = dict(cell.pem_params)
        stats = []
        for long, _ in SUMMARY_STATS:
            d = s.distributions.get(long)
            stats.extend([""] * 5 if d is None else [fmt_float(v) for v in (d.min, d.q1, d.median, d.q3, d.max)])
        w.writerow([cell.cell_id, cell.scenario_name, cell.scenario_id, _fmt_params(cell.scenario_params),
                    cell.pem_name, *(fmt_float(pp.get(v)) for v in pem_vars),
                    s.run_count, fmt_float(s.success_rate), s.collisions, s.anomalies, *stats])
    return buf.getvalue()


def _json_num(x):
    if x is None or math.isnan(x) or math.isinf(x):
        return None if x is None or math.isnan(x) else ("inf" if x > 0 else "-inf")
    return float(f"{x:.6g}")


def summaries_to_json(summaries: Sequence[tuple[Cell, ExperimentSummary]]) -> str:
    cells = []
    for cell, s in summaries:
        cells.append({
            "cell_id": cell.cell_id,
            "scenario": cell.scenario_name,
            "scenario_id": cell.scenario_id,
            "scenario_params": {k: _json_num(v) for k, v in cell.scenario_params},
            "pem": cell.pem_name,
            "pem_params": {k: _json_num(v) for k, v in cell.pem_params},
            "runs": s.run_count,
            "success_rate": _json_num(s.success_rate),
            "collisions": s.collisions,
            "anomalies": s.anomalies,
            "distributions": {
                short: None if s.distributions.get(long) is None else {
                    q: _json_num(getattr(s.distributions[long], q)) for q in ("min", "q1", "median", "q3", "max")
                } | {"count": s.distributions[long].count}
                for long, short in SUMMARY_STATS
            },
        })
    return json.dumps({"cells": cells}, indent=1, sort_keys=True) + "\n"


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_outputs(out_dir, config_text: str, matrix, result, seed_override: int | None = None) -> dict:
    """Write runs.csv, summary.csv, summary.json and manifest.json.

    Files are written in that order. On an I/O failure a manifest marked
    ``partial`` lists what was written (best effort) and the error re-raises.
    """
    os.makedirs(out_dir, exist_ok=True)
    outputs = [
        ("runs.csv", lambda: records_to_csv(result.records, matrix.pem_vars)),
        ("summary.csv", lambda: summaries_to_csv(result.summaries, matrix.pem_vars)),
        ("summary.json", lambda: summaries_to_json(result.summaries)),
    ]
    written: dict[str, str] = {}
    manifest = {
        "package_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "config_sha256": sha256_text(config_text),
        "base_seed": matrix.base_seed,
        "seed_override": seed_override,
        "runs_per_cell": matrix.runs_per_cell,
        "cells": len(matrix.cells),
        "episodes": len(result.records),
        "anomalies": sum(1 for r in result.records if r.anomaly),
        "files": written,
        "status": "complete",
    }
    try:
        for name, render in outputs:
            text = render()
            with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            written[name] = sha256_text(text)
    except OSError as exc:
        manifest["status"] = "partial"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        try:
            with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
                json.dump(manifest, fh, indent=1, sort_keys=True)
        except OSError:
            pass
        raise
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest
