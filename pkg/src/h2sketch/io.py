"""Point generation and binary file formats.

All files are little-endian.

* points: ``dim`` (u32), ``n`` (u64), then ``n * dim`` f64 coordinates
* dense matrix: magic ``H2DENSE\\0``, ``n`` (u64), then ``n * n`` f64, row-major
* H2 container: magic ``H2SKETCH``, version (u32), array count (u32), then
  named arrays (name length u16, utf-8 name, dtype code u8, ndim u8, shape
  u64 each, raw data)
"""

from __future__ import annotations

import struct

import numpy as np

from .cluster import ClusterTree, MatrixTree
from .h2matrix import CouplingLevel, H2Matrix, NearField

DENSE_MAGIC = b"H2DENSE\0"
H2_MAGIC = b"H2SKETCH"
H2_VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8")}
_CODES = {np.dtype("float64"): 0, np.dtype("int64"): 1}


def generate_points(n: int, dim: int = 3, mode: str = "grid", seed: int = 0) -> np.ndarray:
    """Points in the unit cube: a regular lattice (endpoints included) or i.i.d. uniform."""
    if n < 1 or dim not in (1, 2, 3):
        raise ValueError("need n >= 1 and dim in {1, 2, 3}")
    if mode == "grid":
        side = int(round(n ** (1.0 / dim)))
        if side**dim != n:
            raise ValueError(f"grid mode needs a perfect {dim}-th power, got n = {n}")
        axis = np.linspace(0.0, 1.0, side) if side > 1 else np.zeros(1)
        mesh = np.meshgrid(*([axis] * dim), indexing="ij")
        return np.stack(mesh, axis=-1).reshape(n, dim)
    if mode in ("random", "uniform-random"):
        bitgen = np.random.Philox(key=np.array([seed, 1 << 32], dtype=np.uint64))
        return np.random.Generator(bitgen).random((n, dim))
    raise ValueError(f"unknown point mode {mode!r}")


def write_points(path, points) -> None:
    points = np.ascontiguousarray(points, dtype="<f8")
    if points.ndim == 1:
        points = points[:, None]
    n, dim = points.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<IQ", dim, n))
        f.write(points.tobytes())


def read_points(path) -> np.ndarray:
    with open(path, "rb") as f:
        dim, n = struct.unpack("<IQ", f.read(12))
        data = np.frombuffer(f.read(8 * n * dim), dtype="<f8")
    if data.size != n * dim:
        raise ValueError(f"{path}: truncated point file")
    points = data.reshape(n, dim).astype(np.float64)
    if not np.all(np.isfinite(points)):
        raise ValueError(f"{path}: non-finite coordinates")
    return points


def write_dense(path, matrix) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f8")
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("dense file holds a square matrix")
    with open(path, "wb") as f:
        f.write(DENSE_MAGIC)
        f.write(struct.pack("<Q", matrix.shape[0]))
        f.write(matrix.tobytes())


def read_dense(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.read(8) != DENSE_MAGIC:
            raise ValueError(f"{path}: not a dense matrix file")
        (n,) = struct.unpack("<Q", f.read(8))
        data = np.frombuffer(f.read(8 * n * n), dtype="<f8")
    if data.size != n * n:
        raise ValueError(f"{path}: truncated dense file")
    return data.reshape(n, n).astype(np.float64)


def _write_array(f, name: str, arr) -> None:
    arr = np.asarray(arr)
    if arr.dtype.kind in "iub":
        arr = arr.astype("<i8")
    else:
        arr = arr.astype("<f8")
    raw = name.encode()
    f.write(struct.pack("<H", len(raw)) + raw)
    f.write(struct.pack("<BB", _CODES[np.dtype(arr.dtype.name)], arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    f.write(np.ascontiguousarray(arr).tobytes())


def _read_array(f):
    (length,) = struct.unpack("<H", f.read(2))
    name = f.read(length).decode()
    code, ndim = struct.unpack("<BB", f.read(2))
    shape = struct.unpack(f"<{ndim}Q", f.read(8 * ndim))
    dtype = _DTYPES[code]
    count = int(np.prod(shape)) if ndim else 1
    data = np.frombuffer(f.read(dtype.itemsize * count), dtype=dtype)
    return name, data.reshape(shape).copy()


def _flat(blocks):
    blocks = list(blocks)
    shapes = np.array([b.shape for b in blocks], dtype=np.int64).reshape(-1, 2)
    data = np.concatenate([b.ravel() for b in blocks]) if blocks else np.zeros(0)
    return shapes, data


def _unflat(shapes, data):
    out, pos = [], 0
    for r, c in shapes:
        out.append(data[pos : pos + r * c].reshape(r, c))
        pos += r * c
    return out


def _ragged(vectors):
    vectors = list(vectors)
    lens = np.array([v.size for v in vectors], dtype=np.int64)
    data = np.concatenate(vectors).astype(np.int64) if vectors else np.zeros(0, dtype=np.int64)
    return lens, data


def _unragged(lens, data):
    bounds = np.concatenate([[0], np.cumsum(lens)])
    return [data[bounds[i] : bounds[i + 1]] for i in range(len(lens))]


def save_h2(path, m: H2Matrix) -> None:
    tree, mt = m.tree, m.mtree
    arrays = {
        "points": tree.points,
        "perm": tree.perm,
        "params": np.array([tree.leaf_size, -1 if m.top_depth is None else m.top_depth]),
        "eta": np.array([mt.eta]),
        "metric": np.array([0 if mt.metric == "center" else 1]),
        "near.shapes": _flat(m.near.panels)[0],
        "near.data": _flat(m.near.panels)[1],
    }
    if m.top_depth is not None:
        arrays["U.shapes"], arrays["U.data"] = _flat(m.U)
        for k in range(m.top_depth, tree.n_levels):
            arrays[f"skel.{k}.lens"], arrays[f"skel.{k}.data"] = _ragged(m.skeletons[k])
            arrays[f"B.{k}.shapes"], arrays[f"B.{k}.data"] = _flat(m.couplings[k].panels)
            if k > m.top_depth:
                arrays[f"E.{k}.shapes"], arrays[f"E.{k}.data"] = _flat(m.E[k])
    with open(path, "wb") as f:
        f.write(H2_MAGIC)
        f.write(struct.pack("<II", H2_VERSION, len(arrays)))
        for name, arr in arrays.items():
            _write_array(f, name, arr)


def load_h2(path) -> H2Matrix:
    with open(path, "rb") as f:
        if f.read(8) != H2_MAGIC:
            raise ValueError(f"{path}: not an H2 container")
        version, count = struct.unpack("<II", f.read(8))
        if version != H2_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        arrays = dict(_read_array(f) for _ in range(count))
    leaf_size, top = (int(v) for v in arrays["params"])
    tree = ClusterTree(arrays["points"], leaf_size)
    if not np.array_equal(tree.perm, arrays["perm"]):
        raise ValueError(f"{path}: stored permutation does not match the rebuilt tree")
    metric = "center" if int(arrays["metric"][0]) == 0 else "box"
    mt = MatrixTree(tree, float(arrays["eta"][0]), metric)
    near = NearField(tree, mt, _unflat(arrays["near.shapes"], arrays["near.data"]))
    if top < 0:
        return H2Matrix(tree, mt, None, near)
    L = tree.n_levels
    skeletons = [[] for _ in range(L)]
    couplings = [None] * L
    E = [[] for _ in range(L)]
    for k in range(top, L):
        skeletons[k] = _unragged(arrays[f"skel.{k}.lens"], arrays[f"skel.{k}.data"])
        panels = _unflat(arrays[f"B.{k}.shapes"], arrays[f"B.{k}.data"])
        couplings[k] = CouplingLevel(mt, k, [v.size for v in skeletons[k]], panels)
        if k > top:
            E[k] = _unflat(arrays[f"E.{k}.shapes"], arrays[f"E.{k}.data"])
    U = _unflat(arrays["U.shapes"], arrays["U.data"])
    return H2Matrix(tree, mt, top, near, U=U, E=E, skeletons=skeletons, couplings=couplings)
