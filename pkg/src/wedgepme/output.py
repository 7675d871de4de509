"""CSV / JSON persistence with a fixed file layout."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .evolution import TRACE_COLUMNS, EvolutionTrace
from .geometry import SingularMesh, mesh_rows

MESH_HEADER = ("i_t", "i_theta", "t", "theta", "rho", "measure")
FIELD_HEADER = ("i_t", "i_theta", "t", "theta", "u")


def _plain(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


def write_mesh_csv(mesh: SingularMesh, path: Path) -> Path:
    return write_csv(path, MESH_HEADER, mesh_rows(mesh))


def field_rows(mesh: SingularMesh, u) -> list:
    return list(zip(mesh.i_t.tolist(), mesh.i_theta.tolist(), mesh.cell_t.tolist(),
                    mesh.cell_theta.tolist(), np.asarray(u, dtype=float).tolist()))


def write_field_csv(mesh: SingularMesh, u, path: Path) -> Path:
    return write_csv(path, FIELD_HEADER, field_rows(mesh, u))


def read_field_csv(mesh: SingularMesh, path) -> np.ndarray:
    """Read a ``i_t,i_theta,t,theta,u`` dump back into cell order."""
    u = np.full(mesh.n_cells, np.nan)
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != FIELD_HEADER:
            raise ValueError(f"{path}: expected header {','.join(FIELD_HEADER)}")
        for row in reader:
            i, j = int(row["i_t"]), int(row["i_theta"])
            if not (0 <= i < mesh.n_t and 0 <= j < mesh.n_theta):
                raise ValueError(f"{path}: cell ({i}, {j}) outside the mesh")
            u[i * mesh.n_theta + j] = float(row["u"])
    if np.any(np.isnan(u)):
        raise ValueError(f"{path}: field does not cover every cell")
    return u


def summary_payload(result, config_digest: str, seed: Optional[int], extra: Optional[dict] = None,
                    timestamp: Optional[str] = None) -> dict:
    payload = {
        "name": result.name,
        "tool_version": __version__,
        "config_digest": config_digest,
        "seed": seed,
        "inputs_digest": result.inputs_digest,
        "metrics": result.metrics,
        "verdicts": result.verdicts,
        "tolerances": result.tolerances,
        "passed": result.passed,
        "notes": result.notes,
        "timestamp": timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    if extra:
        payload.update(extra)
    return _plain(payload)


def write_outputs(result, out_dir, *, config_digest: str = "", seed: Optional[int] = None,
                  dump_fields: bool = False, extra: Optional[dict] = None,
                  trace: Optional[EvolutionTrace] = None) -> list:
    """Write ``summary.json``, ``trace.csv`` (header only without a trace), one
    CSV per result table and, if asked, ``fields/step_%06d.csv``. Returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    trace = trace if trace is not None else getattr(result, "trace", None)
    if trace is not None:
        paths.append(write_csv(out / "trace.csv", TRACE_COLUMNS, trace.rows()))
        if dump_fields and result.mesh is not None:
            for i, u in enumerate(trace.states):
                paths.append(write_field_csv(result.mesh, u, out / "fields" / f"step_{i:06d}.csv"))
    else:
        paths.append(write_csv(out / "trace.csv", TRACE_COLUMNS, []))
    for name, (header, rows) in sorted(result.tables.items()):
        paths.append(write_csv(out / f"{name}.csv", header, rows))
    summary = out / "summary.json"
    payload = summary_payload(result, config_digest, seed, extra)
    summary.write_text(json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
                       encoding="utf-8")
    paths.append(summary)
    result.artifacts = [str(p) for p in paths]
    return paths
