"""File formats: binary containers for operators, datasets and models,
plus PGM image dumps, manifests and the CSV reports.

Binary container "RGN1" (all little-endian):

    magic 'RGN1' | u32 version | u64 rows | u64 cols | payload f64 arrays

Version 1 is an operator file whose payload is the row-major matrix, the
singular values (k = min(rows, cols)), the image-space vectors (cols x k)
and the data-space vectors (rows x k).  Version 2 is a plain array file
holding only the matrix block (used for phantom and sinogram sets, one
item per row).  Model files use magic 'RGNN' with an architecture
descriptor followed by the per-layer weight and bias arrays.

Every writer appends a metadata footer (utf-8 "key=value" lines followed
by their u64 byte length) after the declared payload; readers of the
payload never need it, and it is where run provenance such as the config
hash and seeds lives.  Writers are byte-deterministic for fixed inputs.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .linop import SvdOperator
from .network import NetworkArch, NetworkParams

__all__ = [
    "write_operator",
    "read_operator",
    "write_array",
    "read_array",
    "write_model",
    "read_model",
    "read_metadata",
    "write_manifest",
    "read_manifest",
    "write_pgm16",
    "read_pgm16",
    "write_curve_csv",
    "write_rate_csv",
    "write_keyvalue",
]

_MAGIC_ARRAY = b"RGN1"
_MAGIC_MODEL = b"RGNN"
_VERSION_OPERATOR = 1
_VERSION_ARRAY = 2


def _footer_bytes(meta: dict | None) -> bytes:
    meta = meta or {}
    body = "".join(f"{k}={meta[k]}\n" for k in sorted(meta)).encode("utf-8")
    return body + struct.pack("<Q", len(body))


def _read_footer(blob: bytes) -> dict:
    if len(blob) < 8:
        return {}
    (length,) = struct.unpack("<Q", blob[-8:])
    if length > len(blob) - 8:
        return {}
    body = blob[len(blob) - 8 - length : len(blob) - 8].decode("utf-8")
    meta = {}
    for line in body.splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            meta[key] = value
    return meta


def _f64(blob: bytes, offset: int, count: int):
    arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
    return arr.astype(float), offset + 8 * count


def write_operator(path, op: SvdOperator, meta: dict | None = None):
    meta = dict(meta or {})
    meta.setdefault("rank_tol", repr(op.rank_tol))
    parts = [
        _MAGIC_ARRAY,
        struct.pack("<IQQ", _VERSION_OPERATOR, op.rows, op.cols),
        np.ascontiguousarray(op.matrix, dtype="<f8").tobytes(),
        np.ascontiguousarray(op.singular_values, dtype="<f8").tobytes(),
        np.ascontiguousarray(op.image_vectors, dtype="<f8").tobytes(),
        np.ascontiguousarray(op.data_vectors, dtype="<f8").tobytes(),
        _footer_bytes(meta),
    ]
    Path(path).write_bytes(b"".join(parts))


def read_operator(path) -> SvdOperator:
    blob = Path(path).read_bytes()
    if blob[:4] != _MAGIC_ARRAY:
        raise ValueError(f"{path}: not an RGN1 container")
    version, rows, cols = struct.unpack("<IQQ", blob[4:24])
    if version != _VERSION_OPERATOR:
        raise ValueError(f"{path}: expected an operator file (version 1), got version {version}")
    k = min(rows, cols)
    off = 24
    matrix, off = _f64(blob, off, rows * cols)
    sigma, off = _f64(blob, off, k)
    u, off = _f64(blob, off, cols * k)
    v, off = _f64(blob, off, rows * k)
    meta = _read_footer(blob)
    return SvdOperator(
        matrix=matrix.reshape(rows, cols),
        image_vectors=u.reshape(cols, k),
        data_vectors=v.reshape(rows, k),
        singular_values=sigma,
        rank_tol=float(meta.get("rank_tol", 1e-10)),
    )


def write_array(path, array, meta: dict | None = None):
    array = np.atleast_2d(np.asarray(array, dtype=float))
    parts = [
        _MAGIC_ARRAY,
        struct.pack("<IQQ", _VERSION_ARRAY, array.shape[0], array.shape[1]),
        np.ascontiguousarray(array, dtype="<f8").tobytes(),
        _footer_bytes(meta),
    ]
    Path(path).write_bytes(b"".join(parts))


def read_array(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:4] != _MAGIC_ARRAY:
        raise ValueError(f"{path}: not an RGN1 container")
    version, rows, cols = struct.unpack("<IQQ", blob[4:24])
    if version != _VERSION_ARRAY:
        raise ValueError(f"{path}: expected an array file (version 2), got version {version}")
    data, _ = _f64(blob, 24, rows * cols)
    return data.reshape(rows, cols)


def write_model(path, params: NetworkParams, meta: dict | None = None):
    arch = params.arch
    head = [
        _MAGIC_MODEL,
        struct.pack("<IQIBq", 1, arch.grid, arch.n_layers, int(arch.residual), params.seed),
    ]
    for w, _ in params.layers:
        head.append(struct.pack("<II", w.shape[1], w.shape[0]))
    body = []
    for w, b in params.layers:
        body.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        body.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(head + body) + _footer_bytes(meta))


def read_model(path) -> NetworkParams:
    blob = Path(path).read_bytes()
    if blob[:4] != _MAGIC_MODEL:
        raise ValueError(f"{path}: not an RGNN model file")
    version, grid, n_layers, residual, seed = struct.unpack("<IQIBq", blob[4:29])
    if version != 1:
        raise ValueError(f"{path}: unsupported model version {version}")
    off = 29
    shapes = []
    for _ in range(n_layers):
        cin, cout = struct.unpack("<II", blob[off : off + 8])
        shapes.append((cin, cout))
        off += 8
    hidden = tuple(cout for _, cout in shapes[:-1])
    arch = NetworkArch(grid=int(grid), hidden=hidden, residual=bool(residual))
    layers = []
    for cin, cout in shapes:
        w, off = _f64(blob, off, cout * cin * 9)
        b, off = _f64(blob, off, cout)
        layers.append((w.reshape(cout, cin, 3, 3), b))
    return NetworkParams(arch=arch, layers=layers, seed=int(seed))


def read_metadata(path) -> dict:
    return _read_footer(Path(path).read_bytes())


def write_manifest(path, entries, meta: dict | None = None):
    """Plain-text family manifest: one 'alpha=<decimal> model=<path>' per line."""
    lines = [f"# {k}={v}" for k, v in sorted((meta or {}).items())]
    lines += [f"alpha={alpha!r} model={model}" for alpha, model in entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path):
    entries = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = dict(part.partition("=")[::2] for part in line.split())
        entries.append((float(fields["alpha"]), fields["model"]))
    return entries


def write_pgm16(path, image):
    """16-bit binary PGM; values are clipped to [0, 1] and scaled to 65535."""
    img = np.atleast_2d(np.asarray(image, dtype=float))
    scaled = np.round(np.clip(img, 0.0, 1.0) * 65535.0).astype(">u2")
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + scaled.tobytes())


def read_pgm16(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    fields = []
    off = 0
    while len(fields) < 4:
        while off < len(blob) and blob[off : off + 1].isspace():
            off += 1
        if blob[off : off + 1] == b"#":
            while blob[off : off + 1] != b"\n":
                off += 1
            continue
        start = off
        while off < len(blob) and not blob[off : off + 1].isspace():
            off += 1
        fields.append(blob[start:off])
    off += 1
    magic, width, height, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic != b"P5" or maxval != 65535:
        raise ValueError(f"{path}: expected 16-bit binary PGM")
    data = np.frombuffer(blob, dtype=">u2", count=width * height, offset=off)
    return data.reshape(height, width).astype(float) / 65535.0


def _comment_lines(meta: dict | None) -> list:
    return [f"# {k}={v}" for k, v in sorted((meta or {}).items())]


def write_curve_csv(path, rows, meta: dict | None = None):
    lines = _comment_lines(meta) + ["alpha,kept,mse,mae"]
    lines += [f"{r.alpha!r},{r.kept},{r.mse!r},{r.mae!r}" for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_rate_csv(path, rows, meta: dict | None = None):
    lines = _comment_lines(meta) + ["delta,alpha,error"]
    lines += [f"{r.delta!r},{r.alpha!r},{r.error!r}" for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_keyvalue(path, values: dict):
    lines = [f"{k}={v}" for k, v in values.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
