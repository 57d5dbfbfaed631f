"""Dataset and model files.

Data files hold one sample per row (CSV) or a raw little-endian float64 block
with header ``b"SPLWDATA" + u32 m + u32 n`` followed by ``m*n`` values in
column-major order.  Labels live in a text file with one integer per line,
``-1`` meaning unlabeled.

Model files start with the 16-byte magic ``b"SPARLOWMODEL\\0\\0\\0\\1"`` followed by
sections ``tag (4 bytes) + u64 length + payload``.  ``CONF`` holds sorted
``key=value`` lines; matrix sections hold ``u32 rows + u32 cols`` and float64
values in column-major order.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, ValidationError
from .graphs import LabelSet

DATA_MAGIC = b"SPLWDATA"
MODEL_MAGIC = b"SPARLOWMODEL\x00\x00\x00\x01"
_HEADER = struct.Struct("<II")
_SECTION = struct.Struct("<4sQ")


@dataclass
class Dataset:
    """Unit-norm samples as columns of ``X`` plus optional labels."""

    X: np.ndarray
    labels: LabelSet | None = None
    names: list[str] | None = None

    @property
    def n(self) -> int:
        return self.X.shape[1]


def normalize_samples(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(X), axis=0))[0])
        raise DataFormatError(f"sample {bad} has non-finite entries")
    norms = np.linalg.norm(X, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValidationError(f"sample {int(zero[0])} has zero norm")
    return X / norms


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except (OSError, UnicodeDecodeError) as err:
        raise DataFormatError(f"cannot read {path}: {err}") from None


def read_csv_matrix(path) -> np.ndarray:
    """Rows of comma-separated decimals as an ``n x d`` array."""
    text = _read_text(path)
    rows = []
    width = None
    for lineno, row in enumerate(csv.reader(text.splitlines()), start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            vals = [float(cell) for cell in row]
        except ValueError as err:
            raise DataFormatError(f"{path}: line {lineno}: {err}") from None
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise DataFormatError(f"{path}: line {lineno}: expected {width} fields, got {len(vals)}")
        rows.append(vals)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def write_csv_matrix(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in M:
                writer.writerow([repr(float(v)) for v in row])
    except OSError as err:
        raise DataFormatError(f"cannot write {path}: {err}") from None


def read_raw_matrix(path) -> np.ndarray:
    """Raw float64 file as an ``m x n`` array."""
    try:
        blob = Path(path).read_bytes()
    except OSError as err:
        raise DataFormatError(f"cannot read {path}: {err}") from None
    if blob[:8] != DATA_MAGIC:
        raise DataFormatError(f"{path}: byte 0: bad magic {blob[:8]!r}")
    if len(blob) < 16:
        raise DataFormatError(f"{path}: byte {len(blob)}: truncated header")
    m, n = _HEADER.unpack_from(blob, 8)
    need = 16 + 8 * m * n
    if len(blob) != need:
        raise DataFormatError(f"{path}: byte {min(len(blob), need)}: expected {need} bytes, found {len(blob)}")
    return np.frombuffer(blob, dtype="<f8", count=m * n, offset=16).reshape((m, n), order="F").copy()


def write_raw_matrix(path, X) -> None:
    X = np.asarray(X, dtype="<f8")
    m, n = X.shape
    try:
        with open(path, "wb") as fh:
            fh.write(DATA_MAGIC + _HEADER.pack(m, n))
            fh.write(np.asfortranarray(X).tobytes(order="F"))
    except OSError as err:
        raise DataFormatError(f"cannot write {path}: {err}") from None


def read_labels(path) -> LabelSet:
    vals = []
    for lineno, line in enumerate(_read_text(path).splitlines(), start=1):
        s = line.strip()
        if not s:
            continue
        try:
            vals.append(int(s))
        except ValueError:
            raise DataFormatError(f"{path}: line {lineno}: not an integer: {s!r}") from None
    return LabelSet(np.array(vals, dtype=np.int64))


def write_labels(path, labels) -> None:
    lab = np.asarray(getattr(labels, "labels", labels), dtype=np.int64)
    Path(path).write_text("".join(f"{int(v)}\n" for v in lab))


def sibling_labels(path) -> Path | None:
    path = Path(path)
    for cand in (path.with_suffix(".labels"), Path(str(path) + ".labels")):
        if cand.is_file():
            return cand
    return None


def load_dataset(path, format: str = "csv", labels_path=None) -> Dataset:
    """Load samples as unit-norm columns.

    Labels come from ``labels_path`` or, if omitted, a sibling ``.labels`` file.
    """
    if format == "csv":
        X = read_csv_matrix(path).T
    elif format in ("raw", "raw-f64"):
        X = read_raw_matrix(path)
    else:
        raise ValidationError(f"unknown data format {format!r}")
    X = normalize_samples(X)
    if labels_path is None:
        labels_path = sibling_labels(path)
    labels = None
    if labels_path is not None:
        labels = read_labels(labels_path)
        if len(labels) != X.shape[1]:
            raise ValidationError(f"{len(labels)} labels for {X.shape[1]} samples")
    return Dataset(X, labels)


# --------------------------------------------------------------------------- model archive


def _pack_matrix(M) -> bytes:
    M = np.asarray(M, dtype="<f8")
    rows, cols = M.shape
    return _HEADER.pack(rows, cols) + M.tobytes(order="F")


def _unpack_matrix(buf: bytes, tag: str) -> np.ndarray:
    if len(buf) < 8:
        raise DataFormatError(f"section {tag}: truncated matrix header")
    rows, cols = _HEADER.unpack_from(buf, 0)
    if len(buf) != 8 + 8 * rows * cols:
        raise DataFormatError(f"section {tag}: expected {8 + 8 * rows * cols} bytes, found {len(buf)}")
    return np.frombuffer(buf, dtype="<f8", offset=8).reshape((rows, cols), order="F").copy()


def _format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_archive(path, config: dict, matrices: dict[str, np.ndarray]) -> None:
    conf = "".join(f"{k}={_format_value(config[k])}\n" for k in sorted(config)).encode()
    parts = [MODEL_MAGIC, _SECTION.pack(b"CONF", len(conf)), conf]
    for tag, M in matrices.items():
        payload = _pack_matrix(M)
        parts += [_SECTION.pack(tag.encode(), len(payload)), payload]
    try:
        Path(path).write_bytes(b"".join(parts))
    except OSError as err:
        raise DataFormatError(f"cannot write {path}: {err}") from None


def read_archive(path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    try:
        blob = Path(path).read_bytes()
    except OSError as err:
        raise DataFormatError(f"cannot read {path}: {err}") from None
    if blob[:16] != MODEL_MAGIC:
        raise DataFormatError(f"{path}: byte 0: not a model file")
    pos = 16
    config: dict[str, str] = {}
    matrices: dict[str, np.ndarray] = {}
    while pos < len(blob):
        if pos + _SECTION.size > len(blob):
            raise DataFormatError(f"{path}: byte {pos}: truncated section header")
        tag_b, length = _SECTION.unpack_from(blob, pos)
        pos += _SECTION.size
        if pos + length > len(blob):
            raise DataFormatError(f"{path}: byte {pos}: section overruns file")
        payload = blob[pos:pos + length]
        pos += length
        tag = tag_b.decode("ascii", "replace")
        if tag == "CONF":
            for line in payload.decode().splitlines():
                key, _, val = line.partition("=")
                config[key] = val
        else:
            matrices[tag] = _unpack_matrix(payload, tag)
    return config, matrices
