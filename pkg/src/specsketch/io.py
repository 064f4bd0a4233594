"""Bit-exact file formats and trajectory ingestion.

Two little-endian binary containers:

DMAT (dense matrix)
    magic "DMAT", version u16, rows u64, cols u64, dt f64, then the
    row-major float64 payload. File size is exactly 30 + 8*rows*cols.

SKB1 (sketched block)
    magic "SKB1", version u16, block_index u64, T u64, m u64, N u64,
    sketch kind u8, transform tag u8, seed u64, dt f64, then the (T, m)
    row-major float64 payload. The 56-byte header alone reconstructs the
    sketch operator, so the raw data never needs to be stored.

Both readers validate the header and payload length and raise a distinct
error per failure mode. Dense readers stream one row at a time, so memory
stays at a couple of row buffers no matter the file size. All files are
written atomically (temp file + rename) and are byte-identical across
platforms, including big-endian hosts.
"""

from __future__ import annotations

import os
import struct
import tempfile
import warnings
from collections.abc import Iterable

import numpy as np

from .sketch import SketchKind
from .spectral import SketchedBlock, TimeSeriesSource

DMAT_MAGIC = b"DMAT"
SKB_MAGIC = b"SKB1"
FORMAT_VERSION = 1

_DMAT_HEADER = struct.Struct("<4sHQQd")   # 30 bytes
_SKB_HEADER = struct.Struct("<4sHQQQQBBQd")  # 56 bytes

_KIND_CODES = {SketchKind.GAUSSIAN: 0, SketchKind.HAAR: 1, SketchKind.FJLT: 2}
_KIND_FROM_CODE = {v: k for k, v in _KIND_CODES.items()}
_TRANSFORM_CODES = {None: 0, "wht": 1, "dct": 2}
_TRANSFORM_FROM_CODE = {v: k for k, v in _TRANSFORM_CODES.items()}


class FormatError(Exception):
    """Base class for file format failures."""


class MalformedHeaderError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class SketchShapeWarning(UserWarning):
    """A sketched block with m > N: legal, but usually a mistake."""


def _atomic_write(path, payload_writer) -> None:
    """Write via a temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-specsketch-")
    try:
        with os.fdopen(fd, "wb") as fh:
            payload_writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _le_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def write_dense(source, path, dt: float | None = None) -> None:
    """Write a matrix or TimeSeriesSource as a DMAT file, streaming rows."""
    if isinstance(source, TimeSeriesSource):
        n_steps, n_cols = source.n_steps, source.n_particles
        dt = source.dt if dt is None else dt
        row_iter = source.rows()
    else:
        mat = np.atleast_2d(np.asarray(source, dtype=np.float64))
        n_steps, n_cols = mat.shape
        dt = 1.0 if dt is None else dt
        row_iter = iter(mat)

    def writer(fh):
        fh.write(_DMAT_HEADER.pack(DMAT_MAGIC, FORMAT_VERSION,
                                   n_steps, n_cols, dt))
        for row in row_iter:
            fh.write(_le_bytes(np.asarray(row)))

    _atomic_write(path, writer)


def write_csv(source, path=None) -> None:
    """Write a source as headerless CSV, one timestep per line.

    With ``path`` None the rows stream to stdout. Values are written with
    repr-exact precision so a read-back is lossless.
    """
    if isinstance(source, TimeSeriesSource):
        row_iter = source.rows()
    else:
        row_iter = iter(np.atleast_2d(np.asarray(source, dtype=np.float64)))

    def emit(fh, encode):
        for row in row_iter:
            line = ",".join(f"{v:.17g}" for v in np.asarray(row)) + "\n"
            fh.write(encode(line))

    if path is None:
        import sys
        emit(sys.stdout, lambda s: s)
    else:
        _atomic_write(path, lambda fh: emit(fh, str.encode))


def _read_dmat_header(fh, path):
    raw = fh.read(_DMAT_HEADER.size)
    if len(raw) < _DMAT_HEADER.size:
        raise MalformedHeaderError(f"{path}: header shorter than "
                                   f"{_DMAT_HEADER.size} bytes")
    magic, version, rows, cols, dt = _DMAT_HEADER.unpack(raw)
    if magic != DMAT_MAGIC:
        raise MalformedHeaderError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: version {version}, "
                                   f"expected {FORMAT_VERSION}")
    if rows < 1 or cols < 1:
        raise MalformedHeaderError(f"{path}: empty dimensions {rows}x{cols}")
    return rows, cols, dt


def _dmat_source(path, audit=None) -> TimeSeriesSource:
    with open(path, "rb") as fh:
        rows, cols, dt = _read_dmat_header(fh, path)
    expected = _DMAT_HEADER.size + 8 * rows * cols
    actual = os.path.getsize(path)
    if actual < expected:
        raise TruncatedPayloadError(f"{path}: {actual} bytes, need {expected}")
    if actual > expected:
        raise MalformedHeaderError(f"{path}: {actual - expected} trailing bytes")

    def row_iter():
        with open(path, "rb") as fh:
            fh.seek(_DMAT_HEADER.size)
            if audit is not None:
                audit.record("dmat-row-buffer", cols)
            row_bytes = 8 * cols
            for _ in range(rows):
                raw = fh.read(row_bytes)
                if len(raw) < row_bytes:
                    raise TruncatedPayloadError(f"{path}: payload ended early")
                yield np.frombuffer(raw, dtype="<f8").astype(np.float64)

    return TimeSeriesSource(rows, cols, dt, row_iter)


def _parse_csv_row(line: str, path, lineno: int) -> np.ndarray:
    try:
        return np.array([float(f) for f in line.split(",")])
    except ValueError as exc:
        raise FormatError(f"{path}:{lineno}: non-numeric field ({exc})") from None


def _csv_source(path, dt: float, audit=None) -> TimeSeriesSource:
    n_rows = 0
    n_cols = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            width = line.count(",") + 1
            if n_cols is None:
                n_cols = width
            elif width != n_cols:
                raise FormatError(f"{path}:{lineno}: ragged row "
                                  f"({width} fields, expected {n_cols})")
            n_rows += 1
    if not n_rows:
        raise FormatError(f"{path}: no data rows")

    def row_iter():
        if audit is not None:
            audit.record("csv-row-buffer", n_cols)
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                row = _parse_csv_row(line.strip(), path, lineno)
                if row.size != n_cols:
                    raise FormatError(f"{path}:{lineno}: ragged row")
                yield row

    return TimeSeriesSource(n_rows, n_cols, dt, row_iter)


def read_dense(path, format: str | None = None, dt: float = 1.0,
               audit=None) -> TimeSeriesSource:
    """Open a DMAT or CSV file as a row-streaming source.

    ``format`` is "dmat" or "csv"; by default it is sniffed from the file
    extension, falling back to the magic bytes. CSV is headerless,
    comma-separated, one timestep per line, and carries no dt, so the
    caller may pass one.
    """
    if format is None:
        ext = os.path.splitext(str(path))[1].lower()
        if ext == ".csv":
            format = "csv"
        elif ext == ".dmat":
            format = "dmat"
        else:
            with open(path, "rb") as fh:
                format = "dmat" if fh.read(4) == DMAT_MAGIC else "csv"
    if format == "dmat":
        return _dmat_source(path, audit=audit)
    if format == "csv":
        return _csv_source(path, dt, audit=audit)
    raise ValueError(f"unknown dense format {format!r}")


def write_sketched(block: SketchedBlock, path) -> None:
    """Write one sketched block as an SKB1 file."""
    kind = SketchKind(block.kind)
    transform = block.transform if kind is SketchKind.FJLT else None

    def writer(fh):
        fh.write(_SKB_HEADER.pack(
            SKB_MAGIC, FORMAT_VERSION, block.block_index,
            block.n_steps, block.m, block.n_particles,
            _KIND_CODES[kind], _TRANSFORM_CODES[transform],
            block.seed, block.dt))
        fh.write(_le_bytes(block.data))

    _atomic_write(path, writer)


def read_sketched(path) -> SketchedBlock:
    """Read an SKB1 file back; the round trip is bit-exact."""
    with open(path, "rb") as fh:
        raw = fh.read(_SKB_HEADER.size)
        if len(raw) < _SKB_HEADER.size:
            raise MalformedHeaderError(f"{path}: header shorter than "
                                       f"{_SKB_HEADER.size} bytes")
        (magic, version, block_index, n_steps, m, n_particles,
         kind_code, transform_code, seed, dt) = _SKB_HEADER.unpack(raw)
        if magic != SKB_MAGIC:
            raise MalformedHeaderError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise VersionMismatchError(f"{path}: version {version}, "
                                       f"expected {FORMAT_VERSION}")
        if kind_code not in _KIND_FROM_CODE:
            raise MalformedHeaderError(f"{path}: unknown sketch kind "
                                       f"{kind_code}")
        if transform_code not in _TRANSFORM_FROM_CODE:
            raise MalformedHeaderError(f"{path}: unknown transform tag "
                                       f"{transform_code}")
        if n_steps < 1 or m < 1:
            raise MalformedHeaderError(f"{path}: empty dimensions")
        payload = fh.read(8 * n_steps * m + 1)
    if len(payload) < 8 * n_steps * m:
        raise TruncatedPayloadError(f"{path}: payload has {len(payload)} "
                                    f"bytes, need {8 * n_steps * m}")
    if len(payload) > 8 * n_steps * m:
        raise MalformedHeaderError(f"{path}: trailing bytes after payload")
    if m > n_particles:
        warnings.warn(f"{path}: sketched dimension m={m} exceeds ambient "
                      f"N={n_particles}", SketchShapeWarning, stacklevel=2)
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return SketchedBlock(block_index, data.reshape(n_steps, m),
                         _KIND_FROM_CODE[kind_code], n_particles, seed,
                         transform=_TRANSFORM_FROM_CODE[transform_code],
                         dt=dt)


def write_block_manifest(paths: Iterable[str], manifest_path) -> None:
    """Line-oriented UTF-8 list of block files, relative to the manifest."""
    base = os.path.dirname(os.path.abspath(manifest_path))
    rels = [os.path.relpath(os.path.abspath(p), base) for p in paths]

    def writer(fh):
        fh.write("".join(f"{r}\n" for r in rels).encode("utf-8"))

    _atomic_write(manifest_path, writer)


def read_block_manifest(manifest_path) -> list[str]:
    base = os.path.dirname(os.path.abspath(manifest_path))
    with open(manifest_path, encoding="utf-8") as fh:
        rels = [line.strip() for line in fh if line.strip()]
    if not rels:
        raise FormatError(f"{manifest_path}: empty block manifest")
    return [os.path.join(base, r) for r in rels]


def save_table(path, col_a: np.ndarray, col_b: np.ndarray,
               header: str | None = None) -> None:
    """Two-column plain-text table ('%.17g', reread-exact)."""
    col_a = np.asarray(col_a)
    col_b = np.asarray(col_b)

    def writer(fh):
        lines = []
        if header:
            lines.append(f"# {header}\n")
        lines.extend(f"{a:.17g} {b:.17g}\n" for a, b in zip(col_a, col_b))
        fh.write("".join(lines).encode("utf-8"))

    _atomic_write(path, writer)


def load_table(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column table, text or two-column DMAT."""
    with open(path, "rb") as fh:
        if fh.read(4) == DMAT_MAGIC:
            mat = read_dense(path, format="dmat").to_matrix()
            if mat.shape[1] != 2:
                raise FormatError(f"{path}: expected 2 columns")
            return mat[:, 0], mat[:, 1]
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise FormatError(f"{path}: expected 2 columns")
    return data[:, 0], data[:, 1]


#: Multi-component field reducers for trajectory dumps.
_REDUCERS = {
    "vmag": (("vx", "vy", "vz"), lambda a: np.sqrt((a ** 2).sum(axis=1))),
    "fmag": (("fx", "fy", "fz"), lambda a: np.sqrt((a ** 2).sum(axis=1))),
}


def _iter_dump_frames(path):
    """Yield (columns, values) per frame of a plain-text atom dump."""
    with open(path, encoding="utf-8") as fh:
        line = fh.readline()
        while line:
            if not line.startswith("ITEM: TIMESTEP"):
                raise FormatError(f"{path}: expected 'ITEM: TIMESTEP', "
                                  f"got {line.strip()!r}")
            fh.readline()  # the timestep value itself
            line = fh.readline()
            if not line.startswith("ITEM: NUMBER OF ATOMS"):
                raise FormatError(f"{path}: expected 'ITEM: NUMBER OF ATOMS'")
            try:
                n_atoms = int(fh.readline())
            except ValueError:
                raise FormatError(f"{path}: bad atom count") from None
            line = fh.readline()
            while line and not line.startswith("ITEM: ATOMS"):
                line = fh.readline()  # skip the box-bounds section
            if not line:
                raise FormatError(f"{path}: missing 'ITEM: ATOMS' header")
            columns = line.split()[2:]
            rows = np.empty((n_atoms, len(columns)))
            for i in range(n_atoms):
                fields = fh.readline().split()
                if len(fields) != len(columns):
                    raise FormatError(f"{path}: atom line has {len(fields)} "
                                      f"fields, expected {len(columns)}")
                rows[i] = [float(f) for f in fields]
            yield columns, rows
            line = fh.readline()


def parse_lammps_dump(path, field: str) -> TimeSeriesSource:
    """Stream one row per frame of a plain-text LAMMPS-style atom dump.

    ``field`` is a dump column (e.g. "vx") or a named reducer over several
    columns (e.g. "vmag" for the velocity magnitude). Atoms are reordered
    by ascending id within each frame; the atom count must not change
    between frames.
    """
    n_frames = 0
    n_atoms = None
    for columns, rows in _iter_dump_frames(path):
        if n_frames == 0:
            if "id" not in columns:
                raise FormatError(f"{path}: dump has no 'id' column "
                                  f"(columns: {', '.join(columns)})")
            wanted = _REDUCERS[field][0] if field in _REDUCERS else (field,)
            missing = [c for c in wanted if c not in columns]
            if missing:
                raise FormatError(
                    f"{path}: missing field(s) {', '.join(missing)}; "
                    f"available columns: {', '.join(columns)}")
        if n_atoms is None:
            n_atoms = rows.shape[0]
        elif rows.shape[0] != n_atoms:
            raise FormatError(f"{path}: atom count changed from {n_atoms} "
                              f"to {rows.shape[0]} at frame {n_frames}")
        n_frames += 1
    if not n_frames:
        raise FormatError(f"{path}: no frames")

    def row_iter():
        for columns, rows in _iter_dump_frames(path):
            order = np.argsort(rows[:, columns.index("id")], kind="stable")
            rows = rows[order]
            if field in _REDUCERS:
                names, reduce = _REDUCERS[field]
                cols = [columns.index(n) for n in names]
                yield reduce(rows[:, cols])
            else:
                yield rows[:, columns.index(field)].copy()

    return TimeSeriesSource(n_frames, n_atoms, 1.0, row_iter)
