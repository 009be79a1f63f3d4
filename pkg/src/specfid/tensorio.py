"""Dense matrices, seeded random streams, and matrix file I/O.

Matrices are plain 2-D ``float64`` numpy arrays; :func:`as_matrix` enforces
the finiteness and shape invariants at API boundaries.

SPQT binary layout (all multi-byte fields little-endian)::

    offset  size  field
    0       4     magic b"SPQT"
    4       1     version (0x01)
    5       1     dtype (0x00 = float64, 0x01 = float32)
    6       1     ndim (0x02)
    7       1     pad (0x00)
    8       8     rows (uint64)
    16      8     cols (uint64)
    24      ...   row-major payload
"""

import csv
import io
import struct
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .errors import DataError, FormatError, ShapeError, TruncationError

MAGIC = b"SPQT"
VERSION = 1
HEADER = struct.Struct("<4sBBBBQQ")
DTYPE_CODES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
DTYPE_NAMES = {"f64": 0, "f32": 1}


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite, non-empty 2-D float64 array (no copy if already one)."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and column, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DataError(f"{name} contains non-finite entries")
    return m


def save_tensor(m, path, dtype="f64"):
    m = as_matrix(m)
    code = DTYPE_NAMES[dtype]
    rows, cols = m.shape
    payload = np.ascontiguousarray(m, dtype=DTYPE_CODES[code]).tobytes()
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(HEADER.pack(MAGIC, VERSION, code, 2, 0, rows, cols))
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"cannot write tensor to {path}: {exc}") from exc


def load_tensor(path):
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read tensor from {path}: {exc}") from exc
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < HEADER.size:
        raise TruncationError(f"{path}: file shorter than the {HEADER.size}-byte header")
    _magic, version, code, ndim, _pad, rows, cols = HEADER.unpack_from(raw)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if code not in DTYPE_CODES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    if ndim != 2:
        raise FormatError(f"{path}: expected ndim 2, got {ndim}")
    dt = DTYPE_CODES[code]
    expected = rows * cols * dt.itemsize
    if len(raw) - HEADER.size != expected:
        raise TruncationError(
            f"{path}: header declares {rows}x{cols} ({expected} payload bytes), "
            f"found {len(raw) - HEADER.size}"
        )
    m = np.frombuffer(raw, dtype=dt, offset=HEADER.size).astype(np.float64).reshape(rows, cols)
    if not np.all(np.isfinite(m)):
        raise DataError(f"{path}: payload contains non-finite values")
    return m


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    start = 0
    if not all(_is_number(c) for c in rows[0]):
        start = 1
    body = rows[start:]
    if not body:
        raise FormatError(f"{path}: no data rows")
    width = len(body[0])
    out = np.empty((len(body), width))
    for i, row in enumerate(body):
        if len(row) != width:
            raise FormatError(f"{path}: row {i + start + 1} has {len(row)} cells, expected {width}")
        for j, cell in enumerate(row):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise DataError(f"{path}: unparsable cell {cell!r} at row {i + start + 1}, col {j + 1}") from None
    return as_matrix(out, name=str(path))


def save_csv(m, path):
    m = as_matrix(m)
    buf = io.StringIO()
    for row in m:
        buf.write(",".join(format(float(v), ".17g") for v in row))
        buf.write("\n")
    Path(path).write_text(buf.getvalue())


def load_matrix(path):
    """Load SPQT or CSV, chosen by the ``.csv`` suffix."""
    return load_csv(path) if str(path).lower().endswith(".csv") else load_tensor(path)


def save_matrix(m, path):
    if str(path).lower().endswith(".csv"):
        save_csv(m, path)
    else:
        save_tensor(m, path)


class RandomStream:
    """A seeded, single-consumer stream of random numbers.

    Words come from PCG64 seeded through ``SeedSequence(seed, spawn_key=(stream_id,))``,
    so distinct stream ids give independent streams. Uniforms take the top 53 bits
    of each word. Normals use the inverse-CDF transform ``ndtri((k + 0.5) / 2**53)``,
    which never hits 0 or 1 and is reproducible everywhere.
    """

    algorithm_name = "pcg64-seedseq/inverse-cdf-normal"

    def __init__(self, seed, stream_id=0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self._bitgen = np.random.PCG64(ss)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id})"

    def words(self, size):
        return self._bitgen.random_raw(size).astype(np.uint64)

    def _top53(self, size):
        n = int(np.prod(size)) if np.ndim(size) else int(size)
        return (self.words(n) >> np.uint64(11)).astype(np.float64).reshape(size)

    def uniform(self, size):
        """Uniform reals in [0, 1)."""
        return self._top53(size) * 2.0**-53

    def normal(self, size):
        """Standard normals via the inverse normal CDF."""
        return ndtri((self._top53(size) + 0.5) * 2.0**-53)

    def integers(self, high, size):
        """Uniform integers in [0, high) by floor(u * high)."""
        return np.minimum((self.uniform(size) * high).astype(np.int64), high - 1)


def make_stream(seed, stream_id=0):
    return RandomStream(seed, stream_id)
