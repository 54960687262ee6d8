"""Text formats for tensors, factors and solver traces.

COO tensor::

    shape I J K
    i j k value        (one line per stored entry, 0-based)

Kruskal factors::

    kruskal I J K R
    <I rows of A>
    <J rows of B>
    <K rows of C>

Floats are written with ``repr`` so a write/read round trip is exact.
"""

import csv

import numpy as np

from cpoptnet.tensor import KruskalTensor, SparseTensor3


def _fmt(v):
    return repr(float(v))


def write_coo(path, t):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("shape {} {} {}\n".format(*t.shape))
        for (i, j, k), v in zip(t.indices, t.values):
            fh.write(f"{i} {j} {k} {_fmt(v)}\n")


def read_coo(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in (raw.strip() for raw in fh) if ln]
    if not lines:
        raise ValueError(f"{path}: empty file, expected a 'shape I J K' header")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "shape":
        raise ValueError(f"{path}: bad header {lines[0]!r}")
    shape = tuple(int(s) for s in head[1:])
    idx = np.zeros((len(lines) - 1, 3), dtype=np.int64)
    vals = np.zeros(len(lines) - 1)
    for n, line in enumerate(lines[1:]):
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{path}:{n + 2}: expected 'i j k value', got {line!r}")
        idx[n] = [int(p) for p in parts[:3]]
        vals[n] = float(parts[3])
    return SparseTensor3(shape, idx, vals)


def write_kruskal(path, k):
    I, J, K = k.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"kruskal {I} {J} {K} {k.rank}\n")
        for f in k.factors:
            for row in f:
                fh.write(" ".join(_fmt(v) for v in row) + "\n")


def read_kruskal(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in (raw.strip() for raw in fh) if ln]
    if not lines:
        raise ValueError(f"{path}: empty file, expected a 'kruskal I J K R' header")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "kruskal":
        raise ValueError(f"{path}: bad header {lines[0]!r}")
    I, J, K, R = (int(s) for s in head[1:])
    rows = lines[1:]
    if len(rows) != I + J + K:
        raise ValueError(f"{path}: expected {I + J + K} factor rows, found {len(rows)}")
    data = np.array([[float(v) for v in row.split()] for row in rows])
    if data.shape[1] != R:
        raise ValueError(f"{path}: expected {R} columns per row")
    return KruskalTensor((data[:I], data[I:I + J], data[I + J:]))


def is_kruskal_file(path):
    with open(path, encoding="utf-8") as fh:
        return fh.readline().startswith("kruskal ")


TRACE_FIELDS = ("iter", "objective", "grad_norm", "alpha", "ls_evals")


def write_trace(path, trace):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_FIELDS)
        for rec in trace.records:
            w.writerow([rec.iter, _fmt(rec.objective), _fmt(rec.grad_norm), _fmt(rec.alpha), rec.ls_evals])
