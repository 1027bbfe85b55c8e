"""On-disk problem bundles: meta.txt + Matrix Market + raw float64 vectors.

A bundle directory holds one ``meta.txt`` with ``key = value`` lines (the
``family`` key selects the reader), one ``<name>.mtx`` per matrix and one
``<name>.f64`` per vector (little-endian float64, no header).
"""

import os

import numpy as np

from ..errors import ConfigError
from ..linop import read_matrix_market, write_matrix_market

META_NAME = "meta.txt"


def write_meta(path, meta):
    with open(path, "w") as fh:
        for key in sorted(meta):
            value = meta[key]
            if isinstance(value, (np.floating, np.integer)):
                value = value.item()
            fh.write("%s = %r\n" % (key, value))


def read_meta(path):
    meta = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, raw = line.partition("=")
            key = key.strip()
            raw = raw.strip()
            if raw.startswith(("'", '"')) and raw.endswith(raw[0]) and len(raw) >= 2:
                meta[key] = raw[1:-1]
                continue
            if raw in ("True", "False", "None"):
                meta[key] = {"True": True, "False": False, "None": None}[raw]
                continue
            try:
                meta[key] = int(raw)
            except ValueError:
                try:
                    meta[key] = float(raw)
                except ValueError:
                    meta[key] = raw
    return meta


def write_vector(path, arr):
    np.asarray(arr, dtype=np.float64).astype("<f8").tofile(path)


def read_vector(path):
    return np.fromfile(path, dtype="<f8").astype(np.float64)


def save_problem(outdir, family, meta, matrices, vectors):
    os.makedirs(outdir, exist_ok=True)
    full = dict(meta)
    full["family"] = family
    write_meta(os.path.join(outdir, META_NAME), full)
    for name, mat in matrices.items():
        write_matrix_market(os.path.join(outdir, name + ".mtx"), mat)
    for name, vec in vectors.items():
        write_vector(os.path.join(outdir, name + ".f64"), vec)


def load_problem(outdir):
    meta_path = os.path.join(outdir, META_NAME)
    if not os.path.exists(meta_path):
        raise ConfigError("no %s in %s" % (META_NAME, outdir))
    meta = read_meta(meta_path)
    family = meta.pop("family", None)
    if family is None:
        raise ConfigError("meta.txt lacks a family key")
    matrices = {}
    vectors = {}
    for name in sorted(os.listdir(outdir)):
        base, ext = os.path.splitext(name)
        path = os.path.join(outdir, name)
        if ext == ".mtx":
            matrices[base] = read_matrix_market(path)
        elif ext == ".f64":
            vectors[base] = read_vector(path)
    return family, meta, matrices, vectors
