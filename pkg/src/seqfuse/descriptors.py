"""Per-frame descriptor computations and template-comparison distances.

Four descriptor families are supported:

* patch-normalized low-resolution intensity vectors (SAD-style),
* gradient-orientation histograms (HOG),
* pyramid-pooled CNN feature-map maxima with running standardization,
* argmax keypoints of CNN feature maps, compared by mean Euclidean
  coordinate distance.

All operations are pure except the running standardization, which mutates
the supplied :class:`RunningStats` as a documented side effect.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

SAD_WIDTH, SAD_HEIGHT = 64, 32
SAD_PATCH = 8

HOG_WIDTH, HOG_HEIGHT = 640, 320
HOG_CELL = 32
HOG_BINS = 9
HOG_BLOCK = 2  # cells per block side, stride one cell
HOG_LENGTH = ((HOG_HEIGHT // HOG_CELL - 1) * (HOG_WIDTH // HOG_CELL - 1)
              * HOG_BLOCK * HOG_BLOCK * HOG_BINS)
assert HOG_LENGTH == 6156


# ---------------------------------------------------------------------------
# Intensity descriptor
# ---------------------------------------------------------------------------

def sad_descriptor(img: np.ndarray, patch_size: int = SAD_PATCH) -> np.ndarray:
    """Patch-normalized 64x32 intensity vector (length 2048).

    The image is bilinearly downsampled to 64x32, partitioned into
    ``patch_size`` x ``patch_size`` patches, and each patch is shifted to
    zero mean and scaled to unit variance (a zero-variance patch maps to
    zeros). The normalized image is flattened row-major.

    Invariant to global affine intensity changes a*I + b with a > 0.
    """
    if img.ndim != 2:
        raise ValueError(f"expected a single-channel image, got shape {img.shape}")
    h, w = img.shape
    if h < SAD_HEIGHT or w < SAD_WIDTH:
        raise ValueError(
            f"image {w}x{h} is smaller than the {SAD_WIDTH}x{SAD_HEIGHT} target; "
            "upsampling is refused")
    if SAD_HEIGHT % patch_size or SAD_WIDTH % patch_size:
        raise ValueError(f"patch size {patch_size} does not tile {SAD_WIDTH}x{SAD_HEIGHT}")
    data = np.asarray(img, dtype=np.float64)
    if (h, w) != (SAD_HEIGHT, SAD_WIDTH):
        data = cv2.resize(data, (SAD_WIDTH, SAD_HEIGHT), interpolation=cv2.INTER_LINEAR)
    py, px = SAD_HEIGHT // patch_size, SAD_WIDTH // patch_size
    patches = data.reshape(py, patch_size, px, patch_size).transpose(0, 2, 1, 3)
    means = patches.mean(axis=(2, 3), keepdims=True)
    stds = patches.std(axis=(2, 3), keepdims=True)
    centered = patches - means
    out = np.divide(centered, stds, out=np.zeros_like(centered), where=stds > 0)
    return out.transpose(0, 2, 1, 3).reshape(SAD_HEIGHT, SAD_WIDTH).ravel()


# ---------------------------------------------------------------------------
# Gradient-orientation descriptor
# ---------------------------------------------------------------------------

def hog_descriptor(img: np.ndarray) -> np.ndarray:
    """Gradient-orientation histogram vector of fixed length 6156.

    640x320 input, 32x32 cells (20x10 grid), 9 unsigned orientation bins,
    2x2-cell blocks at one-cell stride, L2 block normalization. Gradients
    use the centered [-1, 0, 1] kernel with zero borders.
    """
    if img.ndim != 2:
        raise ValueError(f"expected a single-channel image, got shape {img.shape}")
    data = np.asarray(img, dtype=np.float64)
    if not np.isfinite(data).all():
        raise ValueError("image contains non-finite pixels")
    if data.shape != (HOG_HEIGHT, HOG_WIDTH):
        data = cv2.resize(data, (HOG_WIDTH, HOG_HEIGHT), interpolation=cv2.INTER_LINEAR)

    gx = np.zeros_like(data)
    gy = np.zeros_like(data)
    gx[:, 1:-1] = data[:, 2:] - data[:, :-2]
    gy[1:-1, :] = data[2:, :] - data[:-2, :]
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx) % np.pi
    bins = np.minimum((ang / (np.pi / HOG_BINS)).astype(np.intp), HOG_BINS - 1)

    cy, cx = HOG_HEIGHT // HOG_CELL, HOG_WIDTH // HOG_CELL
    hist = np.zeros((cy, cx, HOG_BINS))
    for b in range(HOG_BINS):
        votes = np.where(bins == b, mag, 0.0)
        hist[:, :, b] = votes.reshape(cy, HOG_CELL, cx, HOG_CELL).sum(axis=(1, 3))

    blocks = np.lib.stride_tricks.sliding_window_view(hist, (HOG_BLOCK, HOG_BLOCK),
                                                      axis=(0, 1))
    # (by, bx, bins, 2, 2) -> (by, bx, cell-row, cell-col, bins)
    blocks = blocks.transpose(0, 1, 3, 4, 2).reshape(cy - 1, cx - 1, -1)
    norms = np.sqrt((blocks ** 2).sum(axis=2, keepdims=True))
    out = blocks / np.maximum(norms, 1e-12)
    assert out.size == HOG_LENGTH
    return out.ravel()


# ---------------------------------------------------------------------------
# CNN feature-map descriptors
# ---------------------------------------------------------------------------

class RunningStats:
    """Per-feature-map running mean and standard deviation.

    Each update feeds the five pyramid-pooled scores of every map into that
    map's accumulator, covering all images seen so far (the current image
    included). Population standard deviation.
    """

    def __init__(self, n_maps: int):
        if n_maps < 1:
            raise ValueError("need at least one feature map")
        self.n_maps = n_maps
        self.count = 0          # images seen
        self._n = 0             # samples per map (5 per image)
        self._mean = np.zeros(n_maps)
        self._m2 = np.zeros(n_maps)

    def update(self, pooled: np.ndarray) -> None:
        """Fold one image's (n_maps, 5) pooled scores into the statistics."""
        pooled = np.asarray(pooled, dtype=np.float64)
        if pooled.shape != (self.n_maps, 5):
            raise ValueError(f"expected shape ({self.n_maps}, 5), got {pooled.shape}")
        for j in range(5):
            self._n += 1
            delta = pooled[:, j] - self._mean
            self._mean += delta / self._n
            self._m2 += delta * (pooled[:, j] - self._mean)
        self.count += 1

    @property
    def mean(self) -> np.ndarray:
        return self._mean.copy()

    @property
    def std(self) -> np.ndarray:
        if self._n == 0:
            return np.zeros(self.n_maps)
        return np.sqrt(np.maximum(self._m2 / self._n, 0.0))

    def standardize(self, pooled: np.ndarray) -> np.ndarray:
        """Standardize (n_maps, 5) scores; degenerate stats yield zeros.

        With a single image seen, or for any map whose std is zero, the
        standardized scores are defined as 0 (the mean-centered fixed point).
        """
        pooled = np.asarray(pooled, dtype=np.float64)
        if self.count <= 1:
            return np.zeros_like(pooled)
        std = self.std
        ok = std > 0
        out = np.zeros_like(pooled)
        out[ok] = (pooled[ok] - self._mean[ok, None]) / std[ok, None]
        return out

    def state_dict(self) -> dict:
        return {"n_maps": self.n_maps, "count": self.count, "n": self._n,
                "mean": self._mean.tolist(), "m2": self._m2.tolist()}

    @classmethod
    def from_state(cls, state: dict) -> "RunningStats":
        stats = cls(int(state["n_maps"]))
        stats.count = int(state["count"])
        stats._n = int(state["n"])
        stats._mean = np.asarray(state["mean"], dtype=np.float64)
        stats._m2 = np.asarray(state["m2"], dtype=np.float64)
        return stats


def pyramid_pool(maps: np.ndarray) -> np.ndarray:
    """(F, H, W) activations -> (F, 5) [global, NW, NE, SW, SE] maxima.

    Quadrants split at floor(H/2), floor(W/2); an empty quadrant (H or W
    of 1) contributes 0.
    """
    maps = np.asarray(maps, dtype=np.float64)
    if maps.ndim != 3 or maps.shape[0] < 1:
        raise ValueError(f"expected a nonempty (F, H, W) map set, got shape {maps.shape}")
    f, h, w = maps.shape
    h2, w2 = h // 2, w // 2

    def qmax(rows, cols):
        sub = maps[:, rows, cols]
        if sub.shape[1] == 0 or sub.shape[2] == 0:
            return np.zeros(f)
        return sub.max(axis=(1, 2))

    cols = [maps.max(axis=(1, 2)),
            qmax(slice(0, h2), slice(0, w2)),
            qmax(slice(0, h2), slice(w2, w)),
            qmax(slice(h2, h), slice(0, w2)),
            qmax(slice(h2, h), slice(w2, w))]
    return np.stack(cols, axis=1)


def cnn_pyramid_descriptor(maps: np.ndarray, stats: RunningStats) -> np.ndarray:
    """Standardized pyramid-pooled descriptor of length 5F.

    Updates ``stats`` with the current image before standardizing, so the
    current image counts toward the statistics it is normalized by.
    """
    pooled = pyramid_pool(maps)
    if pooled.shape[0] != stats.n_maps:
        raise ValueError(f"stats track {stats.n_maps} maps, tensor has {pooled.shape[0]}")
    stats.update(pooled)
    return stats.standardize(pooled).ravel()


@dataclass(frozen=True)
class KeypointSet:
    """Per-feature-map (x, y) positions of the maximum activation."""

    coords: np.ndarray  # (F, 2) int, columns x then y
    map_height: int
    map_width: int

    def __post_init__(self):
        c = self.coords
        if c.ndim != 2 or c.shape[1] != 2 or c.shape[0] < 1:
            raise ValueError(f"coords must be (F, 2), got {c.shape}")
        if (c[:, 0] < 0).any() or (c[:, 0] >= self.map_width).any():
            raise ValueError("x coordinate out of range")
        if (c[:, 1] < 0).any() or (c[:, 1] >= self.map_height).any():
            raise ValueError("y coordinate out of range")

    @property
    def n_maps(self) -> int:
        return self.coords.shape[0]


def cnn_argmax_keypoints(maps: np.ndarray) -> KeypointSet:
    """Argmax location per feature map; ties break to the smallest
    row-major linear index."""
    maps = np.asarray(maps)
    if maps.ndim != 3 or maps.shape[0] < 1:
        raise ValueError(f"expected a nonempty (F, H, W) map set, got shape {maps.shape}")
    f, h, w = maps.shape
    flat = maps.reshape(f, -1).argmax(axis=1)
    ys, xs = np.divmod(flat, w)
    coords = np.stack([xs, ys], axis=1).astype(np.int64)
    return KeypointSet(coords=coords, map_height=h, map_width=w)


def keypoint_distance(query: KeypointSet, template: KeypointSet) -> float:
    """Mean over feature maps of the Euclidean distance between argmax
    coordinates. A metric on keypoint sets of equal geometry."""
    if query.n_maps != template.n_maps:
        raise ValueError(f"map count mismatch: {query.n_maps} vs {template.n_maps}")
    if (query.map_height, query.map_width) != (template.map_height, template.map_width):
        raise ValueError("map dimensions mismatch")
    diff = query.coords.astype(np.float64) - template.coords.astype(np.float64)
    return float(np.hypot(diff[:, 0], diff[:, 1]).mean())


# ---------------------------------------------------------------------------
# Distance columns
# ---------------------------------------------------------------------------

def cosine_distance_column(query: np.ndarray, templates: np.ndarray) -> np.ndarray:
    """1 - cosine similarity of the query against every template row.

    A zero-norm vector on either side compares as maximally distant (1.0),
    which keeps downstream observation columns finite.
    """
    templates = np.asarray(templates, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    if templates.ndim != 2 or templates.shape[0] == 0:
        raise ValueError("template database is empty")
    if templates.shape[1] != query.shape[0]:
        raise ValueError(
            f"query length {query.shape[0]} does not match template length {templates.shape[1]}")
    qn = np.linalg.norm(query)
    tn = np.linalg.norm(templates, axis=1)
    ok = (tn > 0) & (qn > 0)
    sims = np.zeros(templates.shape[0])
    if qn > 0:
        sims[ok] = (templates[ok] @ query) / (tn[ok] * qn)
    return np.maximum(1.0 - sims, 0.0)


def sad_distance_column(query: np.ndarray, templates: np.ndarray) -> np.ndarray:
    """Mean absolute difference of the query against every template row."""
    templates = np.asarray(templates, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    if templates.ndim != 2 or templates.shape[0] == 0:
        raise ValueError("template database is empty")
    if templates.shape[1] != query.shape[0]:
        raise ValueError(
            f"query length {query.shape[0]} does not match template length {templates.shape[1]}")
    return np.abs(templates - query).mean(axis=1)


def keypoint_distance_column(query: KeypointSet, template_coords: np.ndarray,
                             map_height: int, map_width: int) -> np.ndarray:
    """Keypoint distance of the query against every stored template's
    (F, 2) coordinate array, vectorized over templates."""
    if (map_height, map_width) != (query.map_height, query.map_width):
        raise ValueError("map dimensions mismatch")
    coords = np.asarray(template_coords, dtype=np.float64)
    if coords.ndim != 3 or coords.shape[0] == 0:
        raise ValueError("template database is empty")
    if coords.shape[1] != query.n_maps:
        raise ValueError(f"map count mismatch: {coords.shape[1]} vs {query.n_maps}")
    diff = coords - query.coords.astype(np.float64)[None, :, :]
    return np.hypot(diff[:, :, 0], diff[:, :, 1]).mean(axis=1)
