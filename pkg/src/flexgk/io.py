"""Small file formats: binary PGM images, matrix CSV and run histories.

Matrix CSV has a ``rows,cols`` header followed by one line per row. Floats
are written with ``repr`` so that reading a file back reproduces the values
bit for bit.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .solvers import IterationRecord, SolverRun

__all__ = [
    "write_pgm",
    "read_pgm",
    "write_matrix_csv",
    "read_matrix_csv",
    "HISTORY_COLUMNS",
    "write_history_csv",
    "read_history_csv",
    "write_meta",
    "read_meta",
]

HISTORY_COLUMNS = (
    "cycle",
    "k_global",
    "k_local",
    "relres",
    "relerr",
    "objective_lp",
    "bound_grad",
    "bound_func",
    "restarted",
)


def write_pgm(path, img, bits: int = 8, vmin=None, vmax=None):
    """Write a 2-D array as binary PGM, mapping ``[vmin, vmax]`` linearly to gray levels.

    A constant image maps to zero.
    """
    if bits not in (8, 16):
        raise ValueError(f"bits must be 8 or 16, got {bits}")
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError(f"PGM needs a 2-D array, got shape {img.shape}")
    lo = float(img.min()) if vmin is None else float(vmin)
    hi = float(img.max()) if vmax is None else float(vmax)
    top = 255 if bits == 8 else 65535
    if hi > lo:
        scaled = np.clip((img - lo) / (hi - lo), 0.0, 1.0)
    else:
        scaled = np.zeros_like(img)
    levels = np.rint(scaled * top).astype(">u2" if bits == 16 else np.uint8)
    rows, cols = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n{top}\n".encode("ascii"))
        fh.write(levels.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM into an integer array."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end : end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    cols, rows, top = (int(t) for t in tokens[1:])
    pos += 1
    dtype = np.uint8 if top < 256 else np.dtype(">u2")
    return np.frombuffer(data, dtype=dtype, count=rows * cols, offset=pos).reshape(rows, cols)


def _fmt(v) -> str:
    return repr(float(v))


def write_matrix_csv(path, mat):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim == 1:
        mat = mat[:, None]
    rows, cols = mat.shape
    with open(path, "w", newline="") as fh:
        fh.write(f"{rows},{cols}\n")
        for row in mat:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    with open(path) as fh:
        rows, cols = (int(t) for t in fh.readline().split(","))
        out = np.empty((rows, cols))
        for i in range(rows):
            line = fh.readline()
            vals = line.strip().split(",") if cols else []
            if len(vals) != cols:
                raise ValueError(f"{path}: row {i} has {len(vals)} entries, expected {cols}")
            out[i] = [float(v) for v in vals]
    return out


def _opt(v) -> str:
    return "" if v is None else _fmt(v)


def write_history_csv(path, run: SolverRun):
    """One row per iteration; empty cells for unavailable values."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for r in run.records:
            w.writerow([
                r.cycle, r.k, r.k_local, _fmt(r.relres), _opt(r.relerr),
                _opt(r.objective_lp), _opt(r.bound_grad), _opt(r.bound_func),
                int(r.restarted),
            ])


def read_history_csv(path) -> list:
    def opt(v):
        return None if v == "" else float(v)

    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(IterationRecord(
                k=int(row["k_global"]),
                relres=float(row["relres"]),
                relerr=opt(row["relerr"]),
                objective_lp=opt(row["objective_lp"]),
                restarted=bool(int(row["restarted"])),
                bound_grad=opt(row["bound_grad"]),
                bound_func=opt(row["bound_func"]),
                cycle=int(row["cycle"]),
                k_local=int(row["k_local"]),
            ))
    return out


def write_meta(path, meta: dict):
    with open(path, "w") as fh:
        for key, val in meta.items():
            fh.write(f"{key}={val}\n")


def read_meta(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ValueError(f"{path}: expected key=value, got {line!r}")
            out[key.strip()] = val.strip()
    return out
