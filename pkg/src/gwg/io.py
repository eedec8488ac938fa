"""File formats: model documents, input matrices and hashed result tables.

Result files are written to a temporary name and renamed into place, so a failed
run never leaves a half-written table behind.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import tempfile

import numpy as np

from .models import FAMILIES


def config_hash(cfg) -> str:
    """Short digest of a configuration's canonical JSON form."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _atomic_write(path, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def format_csv(header, rows, chash: str) -> str:
    import io as _io
    buf = _io.StringIO()
    buf.write(f"# config_hash: {chash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def write_csv(path, header, rows, chash: str):
    _atomic_write(path, format_csv(header, rows, chash))


def read_csv(path):
    """``(config_hash, header, rows)`` where rows are lists of strings."""
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first.startswith("# config_hash:"):
            raise ValueError(f"{path}: missing config hash line")
        chash = first.split(":", 1)[1].strip()
        r = csv.reader(fh)
        header = next(r)
        return chash, header, [row for row in r]


def _clean(o):
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        o = float(o)
        return o if math.isfinite(o) else None
    return o


def write_json(path, obj: dict, chash: str):
    doc = {"config_hash": chash, **_clean(obj)}
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- models

def model_document(model) -> dict:
    d = model.to_dict()
    return {"family": model.family,
            "arrays": {k: np.asarray(v).tolist() for k, v in d["arrays"].items()},
            "scalars": _clean(d["scalars"])}


def save_model(model, path):
    _atomic_write(path, json.dumps(model_document(model), sort_keys=True) + "\n")


def model_from_document(doc: dict):
    fam = doc.get("family")
    if fam not in FAMILIES:
        raise ValueError(f"unknown model family {fam!r}")
    arrays = {k: np.asarray(v, dtype=float) for k, v in doc.get("arrays", {}).items()}
    return FAMILIES[fam](**arrays, **doc.get("scalars", {}))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_document(json.load(fh))


# ---------------------------------------------------------------- inputs

def read_int_matrix(path) -> np.ndarray:
    """Encoded sequences: one row per sequence, one integer column per position."""
    a = np.loadtxt(path, dtype=np.int64, ndmin=2, delimiter=None if _is_ws(path) else ",")
    if np.any(a < 0):
        raise ValueError("category indices must be non-negative")
    return a


def read_real_vector(path) -> np.ndarray:
    return np.loadtxt(path, dtype=float, ndmin=1, delimiter=None if _is_ws(path) else ",")


def read_contact_map(path) -> np.ndarray:
    a = np.loadtxt(path, dtype=np.int64, ndmin=2, delimiter=None if _is_ws(path) else ",")
    if a.shape[0] != a.shape[1] or not np.all((a == 0) | (a == 1)):
        raise ValueError("contact map must be a square 0/1 matrix")
    return a.astype(bool)


def _is_ws(path) -> bool:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip() and not line.startswith("#"):
                return "," not in line
    return True
