"""File formats: CSV tables with a JSON sidecar carrying ``N``, and JSON configs.

* signal: ``n,re,im``
* AF: ``p,k,value`` (row-major; masked cells are omitted)
* inner-product map: ``p,k,re,im``
* mask: ``p,k,kept`` (0/1)
* solver trace: ``t,mu,grad_norm,objective[,dist_truth]``

Numbers are written with 17 significant digits so files round-trip exactly.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .sampling import SamplingMask

_FMT = "%.17g"


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return _clean_float(float(obj))
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _clean_float(v: float):
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _clean(obj):
    if isinstance(obj, float):
        return _clean_float(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), default=_json_default, indent=2, sort_keys=True, allow_nan=False)


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_json(obj) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _write_table(path, header, columns, meta=None):
    table = np.column_stack(columns)
    np.savetxt(path, table, fmt=_FMT, delimiter=",", header=",".join(header), comments="")
    if meta is not None:
        write_json(sidecar_path(path), meta)


def _read_table(path, header):
    path = Path(path)
    with path.open() as fh:
        first = fh.readline().strip()
    if first.split(",")[: len(header)] != list(header):
        raise ValueError(f"{path}: expected header {','.join(header)}, got {first!r}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data


def _sidecar_n(path, fallback=None) -> int:
    side = sidecar_path(path)
    if side.exists():
        return int(read_json(side)["N"])
    if fallback is None:
        raise ValueError(f"{path}: missing sidecar {side.name} with field N")
    return fallback


def write_signal(path, x) -> None:
    x = np.asarray(x, dtype=np.complex128)
    _write_table(path, ("n", "re", "im"), (np.arange(x.size), x.real, x.imag))


def read_signal(path) -> np.ndarray:
    data = _read_table(path, ("n", "re", "im"))
    n = data[:, 0].astype(int)
    if not np.array_equal(n, np.arange(n.size)):
        raise ValueError(f"{path}: sample indices must be 0..N-1 in order")
    return data[:, 1] + 1j * data[:, 2]


def write_af(path, A) -> None:
    """Write an AF; a ``MaskedArray`` keeps only its unmasked cells."""
    kept = ~np.ma.getmaskarray(A) if isinstance(A, np.ma.MaskedArray) else np.ones(np.shape(A), dtype=bool)
    values = np.ma.getdata(A)
    p, k = np.nonzero(kept)
    _write_table(path, ("p", "k", "value"), (p, k, values[p, k]), {"N": int(values.shape[0]), "kind": "ambiguity_map"})


def read_af(path):
    """Read an AF; returns a ``MaskedArray`` when cells are missing."""
    data = _read_table(path, ("p", "k", "value"))
    n_len = _sidecar_n(path, int(round(math.sqrt(data.shape[0]))))
    A = np.zeros((n_len, n_len))
    kept = np.zeros((n_len, n_len), dtype=bool)
    p, k = data[:, 0].astype(int), data[:, 1].astype(int)
    A[p, k] = data[:, 2]
    kept[p, k] = True
    return A if kept.all() else np.ma.MaskedArray(A, mask=~kept)


def write_inner_product_map(path, S) -> None:
    S = np.asarray(S)
    p, k = np.indices(S.shape).reshape(2, -1)
    _write_table(path, ("p", "k", "re", "im"), (p, k, S.real.ravel(), S.imag.ravel()), {"N": int(S.shape[0]), "kind": "inner_product_map"})


def read_inner_product_map(path) -> np.ndarray:
    data = _read_table(path, ("p", "k", "re", "im"))
    n_len = _sidecar_n(path, int(round(math.sqrt(data.shape[0]))))
    S = np.zeros((n_len, n_len), dtype=np.complex128)
    S[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2] + 1j * data[:, 3]
    return S


def write_mask(path, mask: SamplingMask) -> None:
    p, k = np.indices(mask.kept.shape).reshape(2, -1)
    meta = {"N": mask.n_len, "mode": mask.mode, "provenance": mask.provenance, "params": mask.params}
    _write_table(path, ("p", "k", "kept"), (p, k, mask.kept.ravel().astype(int)), meta)


def read_mask(path) -> SamplingMask:
    data = _read_table(path, ("p", "k", "kept"))
    side = sidecar_path(path)
    meta = read_json(side) if side.exists() else {}
    n_len = int(meta.get("N", round(math.sqrt(data.shape[0]))))
    kept = np.zeros((n_len, n_len), dtype=bool)
    kept[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2] != 0
    return SamplingMask(kept, meta.get("mode", "exclude"), meta.get("provenance", "custom"), meta.get("params", {}))


def write_trace(path, trace) -> None:
    rows = list(trace.rows())
    header = ["t", "mu", "grad_norm", "objective"]
    if rows and len(rows[0]) == 5:
        header.append("dist_truth")
    with Path(path).open("w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join([str(int(row[0]))] + [_FMT % v for v in row[1:]]) + "\n")
