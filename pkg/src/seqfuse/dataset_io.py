"""I/O layer: frame directories, ground-truth tables, and the tensor interchange format.

Everything loaded here is immutable after construction and safe to share
across threads. The ``.sqft`` tensor container is the bit-exact boundary
between this package and any external feature extractor: an 8-byte magic,
three little-endian uint32 dims (F, H, W) and F*H*W float32 values,
map-major then row-major.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

TENSOR_MAGIC = b"SQFTENS1"
_DIMS = struct.Struct("<III")

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".pgm", ".ppm", ".tif", ".tiff"}


class IngestionError(RuntimeError):
    """A dataset input is missing, undecodable, or structurally invalid."""


class FormatError(ValueError):
    """A tensor file violates the container format.

    ``offset`` is the byte position where the violation was detected.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


# ---------------------------------------------------------------------------
# Frames
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrameSource:
    """An ordered, optionally subsampled set of image frames.

    Frame ids are the indices of the lexicographically sorted directory
    listing *before* subsampling, so a stride of 3 over 9 frames keeps ids
    {0, 3, 6}. Frame 0 is always retained.
    """

    paths: dict[int, Path]
    frame_ids: tuple[int, ...]
    stride: int = 1

    def __post_init__(self):
        if self.stride < 1:
            raise IngestionError(f"stride must be >= 1, got {self.stride}")
        ids = list(self.frame_ids)
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise IngestionError("frame ids must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frame_ids)

    def __contains__(self, frame_id: int) -> bool:
        return frame_id in self.paths

    @classmethod
    def from_directory(cls, root: str | Path, stride: int = 1) -> "FrameSource":
        root = Path(root)
        if not root.is_dir():
            raise IngestionError(f"frame directory not found: {root}")
        files = sorted(p for p in root.iterdir()
                       if p.suffix.lower() in IMAGE_EXTENSIONS and p.is_file())
        if not files:
            raise IngestionError(f"no frames in {root}")
        if stride < 1:
            raise IngestionError(f"stride must be >= 1, got {stride}")
        selected = {i: files[i] for i in range(0, len(files), stride)}
        return cls(paths=selected, frame_ids=tuple(sorted(selected)), stride=stride)


def load_frame(source: FrameSource, frame_id: int) -> np.ndarray:
    """Load one frame as an 8-bit single-channel raster at original resolution.

    Color frames are reduced with the BT.601 luma weights
    (0.299 R + 0.587 G + 0.114 B); already-gray frames pass through.
    """
    if frame_id not in source.paths:
        raise IngestionError(f"frame id {frame_id} not present in source")
    path = source.paths[frame_id]
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise IngestionError(f"cannot decode frame {frame_id}: {path}")
    if img.size == 0:
        raise IngestionError(f"frame {frame_id} decodes to an empty raster: {path}")
    if img.ndim == 3:
        if img.shape[2] == 4:
            img = cv2.cvtColor(img, cv2.COLOR_BGRA2BGR)
        img = cv2.cvtColor(img, cv2.COLOR_BGR2GRAY)
    if img.dtype != np.uint8:
        img = cv2.normalize(img, None, 0, 255, cv2.NORM_MINMAX).astype(np.uint8)
    return img


# ---------------------------------------------------------------------------
# Tensor container
# ---------------------------------------------------------------------------

def write_tensor(data: np.ndarray, path: str | Path) -> None:
    """Write a (F, H, W) float32 array as a ``.sqft`` tensor file.

    Input is converted to little-endian float32, C-order. Writing then
    reading back is a bit-exact identity on dims and payload.
    """
    arr = np.ascontiguousarray(data, dtype="<f4")
    if arr.ndim != 3:
        raise ValueError(f"tensor payload must be 3-D (F, H, W), got shape {arr.shape}")
    f, h, w = arr.shape
    if f < 1 or h < 1 or w < 1:
        raise ValueError(f"tensor dims must all be >= 1, got {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(_DIMS.pack(f, h, w))
        fh.write(arr.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a ``.sqft`` tensor file back into a (F, H, W) float32 array."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < len(TENSOR_MAGIC):
        raise FormatError(f"{path.name}: truncated before magic", offset=len(raw))
    if raw[: len(TENSOR_MAGIC)] != TENSOR_MAGIC:
        raise FormatError(f"{path.name}: bad magic {raw[:8]!r}", offset=0)
    header_end = len(TENSOR_MAGIC) + _DIMS.size
    if len(raw) < header_end:
        raise FormatError(f"{path.name}: truncated header", offset=len(raw))
    f, h, w = _DIMS.unpack_from(raw, len(TENSOR_MAGIC))
    if f < 1 or h < 1 or w < 1:
        raise FormatError(f"{path.name}: zero dimension in (F={f}, H={h}, W={w})",
                          offset=len(TENSOR_MAGIC))
    expected = f * h * w * 4
    actual = len(raw) - header_end
    if actual < expected:
        raise FormatError(
            f"{path.name}: payload holds {actual} bytes, needs {expected}",
            offset=header_end + actual)
    if actual > expected:
        raise FormatError(
            f"{path.name}: {actual - expected} trailing bytes after payload",
            offset=header_end + expected)
    flat = np.frombuffer(raw, dtype="<f4", count=f * h * w, offset=header_end)
    return flat.reshape(f, h, w).copy()


# ---------------------------------------------------------------------------
# Ground truth
# ---------------------------------------------------------------------------

NOVEL = -1  # reference id marking a query with no true match


@dataclass(frozen=True)
class GroundTruth:
    """Query-to-reference correspondence with a match tolerance.

    frame-offset mode: ``mapping`` holds the true reference id per query id
    (``NOVEL`` for queries with no true match); a proposed reference j
    matches query k iff ``|j - mapping[k]| <= tolerance``.

    metric mode: planar Euclidean distance between the query's and the
    proposed reference's 2-D coordinates must be within ``tolerance``
    meters. Reference coordinates default to the query table when the two
    traverses share one coordinate file.
    """

    mode: str
    tolerance: float
    mapping: dict[int, int] | None = None
    query_coords: dict[int, tuple[float, float]] | None = None
    ref_coords: dict[int, tuple[float, float]] | None = field(default=None)

    def __post_init__(self):
        if self.mode not in ("frame-offset", "metric"):
            raise IngestionError(f"unknown ground-truth mode: {self.mode}")
        if self.tolerance <= 0:
            raise IngestionError(f"tolerance must be > 0, got {self.tolerance}")

    def has_query(self, query_id: int) -> bool:
        if self.mode == "frame-offset":
            return query_id in self.mapping
        return query_id in self.query_coords

    def is_novel(self, query_id: int) -> bool:
        """True when ground truth says no true match exists for this query."""
        if self.mode == "frame-offset":
            self._require(query_id)
            return self.mapping[query_id] == NOVEL
        return False

    def is_match(self, query_id: int, ref_id: int) -> bool:
        self._require(query_id)
        if self.mode == "frame-offset":
            true_ref = self.mapping[query_id]
            if true_ref == NOVEL:
                return False
            return abs(ref_id - true_ref) <= self.tolerance
        qx, qy = self.query_coords[query_id]
        if ref_id not in self.ref_coords:
            raise IngestionError(f"no ground-truth coordinates for reference id {ref_id}")
        rx, ry = self.ref_coords[ref_id]
        return math.hypot(qx - rx, qy - ry) <= self.tolerance

    def _require(self, query_id: int) -> None:
        if not self.has_query(query_id):
            raise IngestionError(f"no ground-truth row for query id {query_id}")


def _read_rows(path: Path, columns: tuple[str, ...]) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in columns if c not in header]
        if missing:
            raise IngestionError(f"{path.name}: missing columns {missing} (header {header})")
        return list(reader)


def _parse_coord_table(path: Path) -> dict[int, tuple[float, float]]:
    coords: dict[int, tuple[float, float]] = {}
    last_id = None
    for row in _read_rows(path, ("frame_id", "x", "y")):
        fid = int(row["frame_id"])
        x, y = float(row["x"]), float(row["y"])
        if math.isnan(x) or math.isnan(y):
            raise IngestionError(f"{path.name}: NaN coordinate for frame {fid}")
        if last_id is not None and fid <= last_id:
            raise IngestionError(f"{path.name}: frame ids not strictly increasing at {fid}")
        last_id = fid
        coords[fid] = (x, y)
    if not coords:
        raise IngestionError(f"{path.name}: empty coordinate table")
    return coords


def load_ground_truth(path: str | Path, mode: str, tolerance: float,
                      ref_path: str | Path | None = None) -> GroundTruth:
    """Load a ground-truth CSV (UTF-8, header row, comma-separated).

    frame-offset mode expects columns ``query_id, ref_id``; metric mode
    expects ``frame_id, x, y``, with an optional second table for the
    reference traverse's coordinates.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"ground-truth file not found: {path}")
    if mode == "frame-offset":
        mapping: dict[int, int] = {}
        last_id = None
        for row in _read_rows(path, ("query_id", "ref_id")):
            qid, rid = int(row["query_id"]), int(row["ref_id"])
            if last_id is not None and qid <= last_id:
                raise IngestionError(f"{path.name}: query ids not strictly increasing at {qid}")
            last_id = qid
            mapping[qid] = rid
        if not mapping:
            raise IngestionError(f"{path.name}: empty ground-truth table")
        return GroundTruth(mode=mode, tolerance=tolerance, mapping=mapping)
    if mode == "metric":
        query_coords = _parse_coord_table(path)
        ref_coords = _parse_coord_table(Path(ref_path)) if ref_path else query_coords
        return GroundTruth(mode=mode, tolerance=tolerance,
                           query_coords=query_coords, ref_coords=ref_coords)
    raise IngestionError(f"unknown ground-truth mode: {mode}")


def save_ground_truth(gt: GroundTruth, path: str | Path) -> None:
    """Write a frame-offset ground truth back out as CSV."""
    if gt.mode != "frame-offset":
        raise ValueError("only frame-offset ground truth can be saved")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_id", "ref_id"])
        for qid in sorted(gt.mapping):
            writer.writerow([qid, gt.mapping[qid]])
