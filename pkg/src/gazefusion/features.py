"""Backbone abstraction: toy feature extractor plus the bit-exact feature store.

Real deployments export frozen-backbone token sequences once and read them
back here; the "GZFS" file format (docs/formats.md) is the integration
contract. The toy backbone is a deterministic stand-in for desk-scale work:
per grid cell it measures mean R/G/B and the fraction of the cell covered by
the head box, then maps that 4-vector to the output width through a fixed
seeded projection.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import named_stream

FEATURE_MAGIC = b"GZFS"
FEATURE_VERSION = 1
VIEWS = ("infant", "parent")
_VIEW_CODES = {"infant": 0, "parent": 1}
_VIEW_NAMES = {code: name for name, code in _VIEW_CODES.items()}
_SAFE_ID = re.compile(r"^[A-Za-z0-9._-]+$")


class InputError(ValueError):
    """An input image, box, or identifier is unusable."""


class FeatureStoreError(Exception):
    """Base class for feature-store failures."""


class MissingRecordError(FeatureStoreError, KeyError):
    """The requested (session, view, timestamp) record does not exist."""


class FeatureFormatError(FeatureStoreError):
    """A stored record has a corrupt or mismatching header."""


@dataclass
class TokenSequence:
    """Per-view backbone output: N tokens x D features for one frame."""

    session: str
    view: str
    timestamp_s: float
    tokens: np.ndarray

    def __post_init__(self):
        if not _SAFE_ID.match(self.session):
            raise InputError(f"session id {self.session!r} is not filesystem-safe")
        if self.view not in VIEWS:
            raise InputError(f"view must be one of {VIEWS}, got {self.view!r}")
        self.tokens = np.asarray(self.tokens, dtype=np.float32)
        if self.tokens.ndim != 2 or self.tokens.shape[0] < 1 or self.tokens.shape[1] < 1:
            raise InputError(f"tokens must be a non-empty N x D array, got {self.tokens.shape}")
        if not np.all(np.isfinite(self.tokens)):
            raise InputError("tokens contain non-finite values")

    @property
    def timestamp_ms(self) -> int:
        return int(round(self.timestamp_s * 1000.0))


@dataclass
class DualFrameSample:
    """Synchronized pair of token arrays plus label, time, and identity."""

    session: str
    timestamp_s: float
    tokens_a: np.ndarray  # infant view
    tokens_b: np.ndarray  # parent view
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise InputError(f"label must be 0/1, got {self.label!r}")


@dataclass
class ToyBackboneConfig:
    grid: int = 8
    out_dim: int = 64
    projection_seed: int = 0

    def validate(self) -> None:
        if self.grid < 1:
            raise InputError(f"grid must be >= 1, got {self.grid}")
        if self.out_dim < 4:
            raise InputError(f"out_dim must be >= 4, got {self.out_dim}")

    @property
    def tokens_per_view(self) -> int:
        return self.grid * self.grid


def _check_box(head_box) -> tuple[float, float, float, float]:
    x0, y0, x1, y1 = (float(v) for v in head_box)
    if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
        raise InputError(f"degenerate or out-of-range head box {head_box!r}")
    return x0, y0, x1, y1


def projection_matrix(config: ToyBackboneConfig) -> np.ndarray:
    """Fixed 4 -> out_dim map, drawn once from the projection seed."""
    rng = named_stream(config.projection_seed, "toy-backbone-projection")
    return (rng.standard_normal((4, config.out_dim)) / 2.0).astype(np.float32)


def cell_features(image: np.ndarray, head_box, grid: int) -> np.ndarray:
    """Per-cell (mean R, mean G, mean B, head-box coverage), row-major cells.

    Coverage is the exact geometric intersection of the normalized box with
    the normalized cell rectangle, independent of pixel rounding.
    """
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InputError(f"expected an HxWx3 raster, got shape {arr.shape}")
    h, w = arr.shape[:2]
    if h < grid or w < grid:
        raise InputError(f"image {h}x{w} smaller than the {grid}x{grid} grid")
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    else:
        arr = arr.astype(np.float64)
    x0, y0, x1, y1 = _check_box(head_box)
    feats = np.empty((grid * grid, 4), dtype=np.float64)
    row_edges = [int(np.floor(i * h / grid)) for i in range(grid + 1)]
    col_edges = [int(np.floor(j * w / grid)) for j in range(grid + 1)]
    for i in range(grid):
        for j in range(grid):
            cell = arr[row_edges[i]:row_edges[i + 1], col_edges[j]:col_edges[j + 1]]
            feats[i * grid + j, :3] = cell.reshape(-1, 3).mean(axis=0)
            cx0, cx1 = j / grid, (j + 1) / grid
            cy0, cy1 = i / grid, (i + 1) / grid
            overlap_x = max(0.0, min(x1, cx1) - max(x0, cx0))
            overlap_y = max(0.0, min(y1, cy1) - max(y0, cy0))
            feats[i * grid + j, 3] = overlap_x * overlap_y * grid * grid
    return feats


def toy_backbone_extract(image, head_box, config: ToyBackboneConfig,
                         session: str = "unnamed", view: str = "infant",
                         timestamp_s: float = 0.0) -> TokenSequence:
    """Deterministic toy token sequence for one frame: g*g tokens of width D."""
    config.validate()
    feats = cell_features(image, head_box, config.grid)
    tokens = (feats @ projection_matrix(config).astype(np.float64)).astype(np.float32)
    return TokenSequence(session=session, view=view, timestamp_s=timestamp_s, tokens=tokens)


# ---------------------------------------------------------------------------
# GZFS feature store: one file per (session, view, timestamp_ms)


def _record_path(root, session: str, view: str, timestamp_ms: int) -> Path:
    return Path(root) / session / view / f"{timestamp_ms}.gzfs"


def feature_store_write(seq: TokenSequence, root) -> Path:
    path = _record_path(root, seq.session, seq.view, seq.timestamp_ms)
    path.parent.mkdir(parents=True, exist_ok=True)
    session_bytes = seq.session.encode("utf-8")
    n, d = seq.tokens.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<B", FEATURE_VERSION))
        fh.write(struct.pack("<H", len(session_bytes)))
        fh.write(session_bytes)
        fh.write(struct.pack("<B", _VIEW_CODES[seq.view]))
        fh.write(struct.pack("<q", seq.timestamp_ms))
        fh.write(struct.pack("<II", n, d))
        fh.write(np.ascontiguousarray(seq.tokens, dtype="<f4").tobytes())
    return path


def _read_exact(fh, n: int, what: str, path) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FeatureFormatError(f"{path}: truncated while reading {what}")
    return buf


def _parse_record(path) -> TokenSequence:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic", path)
        if magic != FEATURE_MAGIC:
            raise FeatureFormatError(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<B", _read_exact(fh, 1, "version", path))
        if version != FEATURE_VERSION:
            raise FeatureFormatError(f"{path}: unsupported version {version}")
        (session_len,) = struct.unpack("<H", _read_exact(fh, 2, "session length", path))
        session = _read_exact(fh, session_len, "session", path).decode("utf-8")
        (view_code,) = struct.unpack("<B", _read_exact(fh, 1, "view", path))
        if view_code not in _VIEW_NAMES:
            raise FeatureFormatError(f"{path}: unknown view code {view_code}")
        (timestamp_ms,) = struct.unpack("<q", _read_exact(fh, 8, "timestamp", path))
        n, d = struct.unpack("<II", _read_exact(fh, 8, "extents", path))
        payload = _read_exact(fh, 4 * n * d, "payload", path)
        if fh.read(1):
            raise FeatureFormatError(f"{path}: trailing bytes after payload")
    tokens = np.frombuffer(payload, dtype="<f4").reshape(n, d).copy()
    return TokenSequence(session=session, view=_VIEW_NAMES[view_code],
                         timestamp_s=timestamp_ms / 1000.0, tokens=tokens)


def feature_store_read(root, session: str, view: str, timestamp_s: float) -> TokenSequence:
    timestamp_ms = int(round(timestamp_s * 1000.0))
    path = _record_path(root, session, view, timestamp_ms)
    if not path.exists():
        raise MissingRecordError(
            f"no feature record for ({session}, {view}, {timestamp_ms} ms) under {root}")
    seq = _parse_record(path)
    if (seq.session, seq.view, seq.timestamp_ms) != (session, view, timestamp_ms):
        raise FeatureFormatError(
            f"{path}: header identity ({seq.session}, {seq.view}, {seq.timestamp_ms}) "
            f"does not match its location")
    return seq


def iter_records(root):
    """Yield (session, view, timestamp_ms, path) for every record, sorted."""
    root = Path(root)
    if not root.exists():
        return
    entries = []
    for path in root.glob("*/*/*.gzfs"):
        session, view, name = path.parts[-3], path.parts[-2], path.stem
        entries.append((session, view, int(name), path))
    entries.sort()
    yield from entries


def verify_store(root) -> list[str]:
    """Integrity pass: parse every record, flag header/location mismatches."""
    issues = []
    for session, view, timestamp_ms, path in iter_records(root):
        try:
            seq = _parse_record(path)
        except FeatureFormatError as exc:
            issues.append(str(exc))
            continue
        if (seq.session, seq.view, seq.timestamp_ms) != (session, view, timestamp_ms):
            issues.append(f"{path}: header identity does not match its location")
    return issues


# ---------------------------------------------------------------------------
# minimal uncompressed raster IO (binary PPM, P6, maxval 255)


def write_ppm(path, image: np.ndarray) -> None:
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise InputError(f"write_ppm needs an HxWx3 uint8 array, got {arr.shape} {arr.dtype}")
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P6":
        raise InputError(f"{path}: not a binary PPM (P6) file")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise InputError(f"{path}: unsupported maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    payload = data[pos:pos + w * h * 3]
    if len(payload) != w * h * 3:
        raise InputError(f"{path}: truncated pixel payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).copy()
