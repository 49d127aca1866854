"""On-disk formats: NGI1 arrays, JSON sidecars, 16-bit PGM previews, CSV traces,
run manifests. Every write goes through a temp file and an atomic rename."""
from __future__ import annotations

import contextlib
import csv
import hashlib
import io as _io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import MissingInputError

MAGIC = b"NGI1"
DTYPE_CODES = {1: np.dtype("<f8"), 2: np.dtype("<c16")}


class NGIFormatError(ValueError):
    pass


@contextlib.contextmanager
def atomic_open(path, mode="wb"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def encode_array(array) -> bytes:
    a = np.asarray(array)
    if np.iscomplexobj(a):
        code, a = 2, a.astype("<c16", copy=False)
    elif a.dtype.kind in "fiub":
        code, a = 1, a.astype("<f8", copy=False)
    else:
        raise TypeError(f"cannot store dtype {a.dtype} in NGI1")
    header = MAGIC + struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape) + struct.pack("<B", code)
    return header + np.ascontiguousarray(a).tobytes(order="C")


def decode_array(buf: bytes) -> np.ndarray:
    if buf[:4] != MAGIC:
        raise NGIFormatError("bad magic, not an NGI1 file")
    (ndim,) = struct.unpack_from("<I", buf, 4)
    off = 8
    dims = struct.unpack_from(f"<{ndim}Q", buf, off)
    off += 8 * ndim
    (code,) = struct.unpack_from("<B", buf, off)
    off += 1
    if code not in DTYPE_CODES:
        raise NGIFormatError(f"unknown dtype code {code}")
    dtype = DTYPE_CODES[code]
    expected = dtype.itemsize * int(np.prod(dims, dtype=np.int64))
    if len(buf) - off != expected:
        raise NGIFormatError(f"payload is {len(buf) - off} bytes, expected {expected}")
    return np.frombuffer(buf, dtype=dtype, offset=off).reshape(dims).copy()


def write_array(path, array) -> Path:
    path = Path(path)
    with atomic_open(path) as fh:
        fh.write(encode_array(array))
    return path


def read_array(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"array file not found: {path}")
    return decode_array(path.read_bytes())


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (tuple, set)):
        return list(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_json(path, obj) -> Path:
    with atomic_open(path, "w") as fh:
        fh.write(dumps(obj))
    return Path(path)


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"file not found: {path}")
    with open(path) as fh:
        return json.load(fh)


def write_pgm(path, image) -> dict:
    """16-bit binary PGM, values mapped linearly from [min, max] to [0, 65535].

    Writes ``<path>.json`` with the mapping and returns it.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 1:
        img = img[None, :]
    if img.ndim != 2:
        raise ValueError("PGM preview needs a 1D or 2D image")
    lo, hi = float(img.min()), float(img.max())
    span = hi - lo
    scaled = np.zeros_like(img) if span == 0 else (img - lo) / span * 65535.0
    data = np.clip(np.rint(scaled), 0, 65535).astype(">u2")
    rows, cols = data.shape
    with atomic_open(path) as fh:
        fh.write(f"P5\n{cols} {rows}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())
    mapping = {"min": lo, "max": hi, "maxval": 65535, "rows": rows, "cols": cols}
    write_json(str(path) + ".json", mapping)
    return mapping


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise NGIFormatError("not a binary PGM")
    cols, rows, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    dt = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(parts[4], dtype=dt, count=rows * cols).reshape(rows, cols)


def write_csv(path, header, rows) -> Path:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    with atomic_open(path, "w") as fh:
        fh.write(buf.getvalue())
    return Path(path)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def sha256_json(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def digest_tree(root, exclude=("manifest.json",)) -> dict:
    """sha256 of every file under ``root`` keyed by relative path."""
    root = Path(root)
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name not in exclude:
            out[p.relative_to(root).as_posix()] = sha256_file(p)
    return out
