"""File containers: complex matrices, raw grids with sidecars, PGM previews."""

import struct

import numpy as np

from .errors import FormatError

MATRIX_MAGIC = b"CDTMAT01"
VIRTUAL_MAGIC = b"CDTVAD01"
FIELD_KINDS = ("scattered", "total", "gradient")

# magic, rows, cols, k0, field kind, padding
_MATRIX_HEADER = struct.Struct("<8sQQdB7x")
# rotation, z_S, z_R, span_S, span_R, origin x, origin z
_VIRTUAL_EXTRA = struct.Struct("<7d")


def write_matrix(path, data, k0, field_kind="scattered", magic=MATRIX_MAGIC, extra=b""):
    data = np.ascontiguousarray(data, dtype="<c16")
    if data.ndim != 2:
        raise FormatError("matrix payload must be 2D")
    kind = FIELD_KINDS.index(field_kind)
    with open(path, "wb") as fh:
        fh.write(_MATRIX_HEADER.pack(magic, data.shape[0], data.shape[1], float(k0), kind))
        fh.write(extra)
        fh.write(data.tobytes())


def read_matrix(path, magic=MATRIX_MAGIC, extra_size=0):
    """Return ``(data, k0, field_kind, extra_bytes)``."""
    with open(path, "rb") as fh:
        head = fh.read(_MATRIX_HEADER.size)
        if len(head) != _MATRIX_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        got, rows, cols, k0, kind = _MATRIX_HEADER.unpack(head)
        if got != magic:
            raise FormatError(f"{path}: bad magic {got!r}")
        if kind >= len(FIELD_KINDS):
            raise FormatError(f"{path}: unknown field kind {kind}")
        extra = fh.read(extra_size)
        payload = fh.read()
    if len(payload) != rows * cols * 16:
        raise FormatError(f"{path}: payload has {len(payload)} bytes, expected {rows * cols * 16}")
    data = np.frombuffer(payload, dtype="<c16").reshape(rows, cols).astype(complex)
    return data, k0, FIELD_KINDS[kind], extra


def pack_virtual_extra(rotation, z_s, z_r, span_s, span_r, origin_x, origin_z):
    return _VIRTUAL_EXTRA.pack(rotation, z_s, z_r, span_s, span_r, origin_x, origin_z)


def unpack_virtual_extra(raw):
    if len(raw) != _VIRTUAL_EXTRA.size:
        raise FormatError("truncated virtual-array metadata")
    return _VIRTUAL_EXTRA.unpack(raw)


VIRTUAL_EXTRA_SIZE = _VIRTUAL_EXTRA.size


def write_grid(path, grid, meta):
    """Raw little-endian float64 grid plus a ``.txt`` sidecar of ``key = value`` lines."""
    grid = np.ascontiguousarray(grid, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(grid.tobytes())
    lines = [f"rows = {grid.shape[0]}", f"cols = {grid.shape[1]}"]
    lines += [f"{k} = {_fmt(v)}" for k, v in meta.items()]
    with open(str(path) + ".txt", "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_sidecar(path):
    meta = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()
    return meta


def read_grid(path):
    meta = read_sidecar(str(path) + ".txt")
    rows, cols = int(meta["rows"]), int(meta["cols"])
    raw = np.fromfile(path, dtype="<f8")
    if raw.size != rows * cols:
        raise FormatError(f"{path}: expected {rows * cols} values, found {raw.size}")
    return raw.reshape(rows, cols), meta


def write_pgm(path, image, bits=16):
    """Binary PGM preview, rows flipped so that +z is up. Scaled to full range."""
    img = np.asarray(image, dtype=float)
    lo, hi = float(np.min(img)), float(np.max(img))
    maxval = (1 << bits) - 1
    scaled = np.zeros_like(img) if hi <= lo else (img - lo) / (hi - lo)
    q = np.rint(scaled[::-1] * maxval)
    dtype = ">u2" if bits > 8 else "u1"
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode("ascii"))
        fh.write(q.astype(dtype).tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    dtype = ">u2" if maxval > 255 else "u1"
    data = np.frombuffer(parts[4], dtype=dtype)
    return data.reshape(h, w)[::-1].astype(int), maxval
