"""Flat-binary + JSON-sidecar exports and CSV writers.

Every array goes to <name>.bin as C-order float64 with a JSON sidecar carrying
the grid, shape and provenance; CSV payloads are written with 17 significant
digits in a fixed column order so repeated runs are byte-identical.
"""
from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from .media import CoefficientField, Grid, build_grid

SCHEMA_VERSION = 1

__all__ = [
    "save_array",
    "load_array",
    "save_field",
    "load_field",
    "save_corrector_set",
    "write_csv",
    "file_sha256",
    "SCHEMA_VERSION",
]


def _grid_meta(grid: Grid) -> dict:
    return {"d": grid.d, "extent": grid.extent, "points": grid.points}


def _grid_from_meta(meta: dict) -> Grid:
    return build_grid(meta["d"], meta["extent"], meta["points"])


def save_array(arr: np.ndarray, base: str, meta: dict | None = None) -> list:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    bin_path = base + ".bin"
    json_path = base + ".json"
    arr.tofile(bin_path)
    side = {"schema": SCHEMA_VERSION, "dtype": "float64", "order": "C", "shape": list(arr.shape)}
    if meta:
        side.update(meta)
    with open(json_path, "w") as fh:
        json.dump(side, fh, indent=1, sort_keys=True)
    return [bin_path, json_path]


def load_array(base: str):
    with open(base + ".json") as fh:
        side = json.load(fh)
    arr = np.fromfile(base + ".bin", dtype=np.float64).reshape(side["shape"])
    return arr, side


def save_field(field: CoefficientField, base: str) -> list:
    meta = {"grid": _grid_meta(field.grid), "kind": field.kind,
            "params": {k: v for k, v in field.params.items() if not isinstance(v, np.ndarray)},
            "floor": field.floor, "ceiling": field.ceiling}
    return save_array(field.values, base, meta)


def load_field(base: str) -> CoefficientField:
    arr, side = load_array(base)
    return CoefficientField(grid=_grid_from_meta(side["grid"]), values=arr, kind=side["kind"],
                            params=side.get("params", {}), floor=side["floor"], ceiling=side["ceiling"])


def save_corrector_set(cset, out_dir: str, prefix: str = "corrector") -> list:
    """Corrector fields as flat binaries plus one manifest with tensors,
    residuals and growth constants."""
    os.makedirs(out_dir, exist_ok=True)
    files = []
    Ks = cset.growth_constants()
    manifest = {
        "schema": SCHEMA_VERSION,
        "N": cset.N,
        "method": cset.method,
        "grid": _grid_meta(cset.grid),
        "abar": {str(n): {"_".join(map(str, B)) or "scalar": np.asarray(M).tolist()
                          for B, M in cset.abar[n].items()} for n in cset.abar},
        "growth_constants": {str(n): Ks[n] for n in Ks},
        "residuals": {str(n): max(cset.residual[n].values()) for n in cset.residual},
        "sigma_residuals": {str(n): max(cset.sigma_residual[n].values()) for n in cset.sigma_residual},
    }
    for n in range(1, cset.N + 1):
        for S, arr in cset.phi[n].items():
            tag = f"{prefix}_phi{n}_" + ("".join(map(str, S)) or "0")
            files += save_array(arr, os.path.join(out_dir, tag))
        if n in cset.sigma:
            for S, arr in cset.sigma[n].items():
                tag = f"{prefix}_sigma{n}_" + ("".join(map(str, S)) or "0")
                files += save_array(arr, os.path.join(out_dir, tag))
    man_path = os.path.join(out_dir, f"{prefix}_manifest.json")
    with open(man_path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    files.append(man_path)
    return files


def save_state(state, base: str) -> list:
    """Wave snapshot: displacement and velocity binaries plus one sidecar."""
    files = save_array(state.u, base + "_u", {"grid": _grid_meta(state.grid), "t": state.t, "field": "u"})
    files += save_array(state.v, base + "_v", {"grid": _grid_meta(state.grid), "t": state.t, "field": "v"})
    return files


def save_eigenpairs(pairs, out_dir: str, prefix: str = "eigen") -> list:
    """Eigenpair table (lambda, residual, participation ratio) plus the state
    binaries."""
    os.makedirs(out_dir, exist_ok=True)
    rows = [(i, p.eigenvalue, p.residual, p.participation_ratio, p.bc)
            for i, p in enumerate(pairs)]
    files = [write_csv(os.path.join(out_dir, f"{prefix}pairs.csv"),
                       ["index", "lambda", "residual", "participation_ratio", "bc"], rows)]
    for i, p in enumerate(pairs):
        files += save_array(p.psi, os.path.join(out_dir, f"{prefix}_psi{i}"),
                            {"grid": _grid_meta(p.grid), "lambda": p.eigenvalue, "bc": p.bc})
    return files


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path: str, header: list, rows: list) -> str:
    """Fixed-order CSV with 17-significant-digit floats."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
