"""Raster-grid primitives: images, label maps, distance transforms, bands, sampling.

Conventions used throughout the package:

* arrays are indexed ``[row, col]`` and 2-vectors are ``(dr, dc)``;
* grid spacing is 1 in both directions;
* the contour of a label map is the set of 4-adjacent pixel pairs with
  differing labels.  It has no pixel width of its own, so distances to the
  contour are measured to the nearest pixel across it, minus one grid step
  (interface-adjacent pixels are "on" the contour at distance 0).
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass
class ImageGrid:
    """A W x H raster with 1 (gray) or 3 (RGB) channels of [0,1] intensities.

    ``data`` has shape (height, width, channels), float64.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError("image must have 1 or 3 channels")
        if data.shape[0] < 3 or data.shape[1] < 3:
            raise ValueError("image must be at least 3x3")
        if not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("intensities must lie in [0, 1]")
        self.data = data

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape[:2]


@dataclass
class LabelMap:
    """Total per-pixel region assignment with labels 1..n."""

    labels: np.ndarray
    n: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValueError("label map must be 2-D")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValueError("labels must be integer")
        labels = labels.astype(np.int32)
        if self.n < 1:
            raise ValueError("need at least one region")
        present = np.unique(labels)
        if present[0] < 1 or present[-1] > self.n:
            raise ValueError("labels must lie in 1..n")
        if len(present) != self.n:
            missing = sorted(set(range(1, self.n + 1)) - set(present.tolist()))
            raise ValueError(f"every label in 1..n must occur; missing {missing}")
        self.labels = labels

    @property
    def shape(self):
        return self.labels.shape

    def region_mask(self, i):
        return self.labels == i

    def copy(self):
        return LabelMap(self.labels.copy(), self.n)


def euclidean_distance_map(seeds, shape):
    """Exact Euclidean distance from every pixel to the nearest seed.

    ``seeds`` is either an (N, 2) array of (row, col) points or a boolean
    mask of the given shape.  Raises ValueError on an empty seed set.
    """
    mask = _as_mask(seeds, shape)
    if not mask.any():
        raise ValueError("no sources")
    if mask.all():
        return np.zeros(shape, dtype=np.float64)
    # scipy's EDT measures distance from nonzero pixels to the nearest zero
    return ndimage.distance_transform_edt(~mask)


def _as_mask(seeds, shape):
    seeds = np.asarray(seeds)
    if seeds.dtype == np.bool_:
        if seeds.shape != tuple(shape):
            raise ValueError("seed mask shape mismatch")
        return seeds
    if seeds.size == 0:
        return np.zeros(shape, dtype=bool)
    if seeds.ndim != 2 or seeds.shape[1] != 2:
        raise ValueError("seed points must be an (N, 2) array")
    if (seeds[:, 0].min() < 0 or seeds[:, 1].min() < 0
            or seeds[:, 0].max() >= shape[0] or seeds[:, 1].max() >= shape[1]):
        raise ValueError("seed point outside the grid")
    mask = np.zeros(shape, dtype=bool)
    mask[seeds[:, 0], seeds[:, 1]] = True
    return mask


def contour_distance(labels: LabelMap, i: int) -> np.ndarray:
    """Unsigned distance to the boundary of region i, for every pixel.

    Distance 0 at pixels 4-adjacent to the interface (either side); grows by
    the exact Euclidean distance transform minus one grid step elsewhere.
    """
    mask = labels.region_mask(i)
    if not mask.any():
        raise ValueError("vanished region")
    if mask.all():
        return np.full(labels.shape, np.inf)
    inside = ndimage.distance_transform_edt(mask)
    outside = ndimage.distance_transform_edt(~mask)
    return inside + outside - 1.0


def contour_distance_all(labels: LabelMap) -> np.ndarray:
    """Unsigned distance to the whole contour (min over per-region distances)."""
    if labels.n == 1:
        return np.full(labels.shape, np.inf)
    dist = np.full(labels.shape, np.inf)
    for i in range(1, labels.n + 1):
        np.minimum(dist, contour_distance(labels, i), out=dist)
    return dist


def extract_offset_band(labels: LabelMap, i: int, ell: float) -> np.ndarray:
    """Pixels of region i lying on the discrete ell-offset line of its boundary.

    Returns the (N, 2) point set with contour distance in [ell-1, ell); when
    the region is thinner than ell, falls back to its deepest pixels so the
    region still seeds a front.
    """
    if ell <= 0:
        raise ValueError("offset distance must be positive")
    mask = labels.region_mask(i)
    if not mask.any():
        raise ValueError("vanished region")
    dist = contour_distance(labels, i)
    band = mask & (dist >= ell - 1.0) & (dist < ell)
    if not band.any():
        # thin region: seed from the deepest pixels instead of vanishing
        dmax = dist[mask].max()
        band = mask & (dist == dmax)
    return np.argwhere(band).astype(np.int64)


def build_narrowband(labels: LabelMap, ell: float):
    """Tubular neighbourhood of the contour and its per-region restrictions.

    Returns ``(u_gamma, [u_1, ..., u_n])`` boolean masks with
    ``u_i = {x in u_gamma : dist(x, boundary_i) < ell}``.
    """
    if ell <= 0:
        raise ValueError("band width must be positive")
    if labels.n == 1:
        empty = np.zeros(labels.shape, dtype=bool)
        return empty, [empty.copy()]
    per_region = [contour_distance(labels, i) for i in range(1, labels.n + 1)]
    e_gamma = np.minimum.reduce(per_region)
    u_gamma = e_gamma < ell
    u_i = [u_gamma & (d < ell) for d in per_region]
    return u_gamma, u_i


def interface_voronoi(labels: LabelMap) -> np.ndarray:
    """Assign each pixel the unordered pair (i, j) of its nearest interface.

    Returned as an (H, W, 2) int32 array with pair[0] < pair[1].  The partner
    j is the region whose pixels are Euclidean-nearest among the other
    regions, ties broken toward the smallest region index, which makes the
    resulting pair lexicographically smallest.
    """
    if labels.n < 2:
        raise ValueError("need at least two regions")
    own = labels.labels
    best = np.full(labels.shape, np.inf)
    partner = np.zeros(labels.shape, dtype=np.int32)
    for j in range(labels.n, 0, -1):
        dist_j = ndimage.distance_transform_edt(~labels.region_mask(j))
        take = (own != j) & (dist_j <= best)
        best[take] = dist_j[take]
        partner[take] = j
    pair = np.stack([np.minimum(own, partner), np.maximum(own, partner)], axis=-1)
    return pair.astype(np.int32)


def farthest_point_sampling(region, count, first=None):
    """Greedy farthest point sampling of ``count`` pixels inside a mask.

    Successive points maximize the minimal Euclidean distance to the points
    already chosen (ties resolved to the lexicographically smallest (row,
    col)).  The default first point is the pixel deepest inside the region,
    counting the image border as boundary.
    """
    region = np.asarray(region, dtype=bool)
    pts = np.argwhere(region)
    if count > pts.shape[0]:
        raise ValueError("sample count exceeds region size")
    if count < 1:
        raise ValueError("sample count must be positive")
    if first is None:
        padded = np.pad(region, 1)
        depth = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
        depth[~region] = -1.0
        flat = int(np.argmax(depth))
        start = np.array(np.unravel_index(flat, region.shape), dtype=np.int64)
    else:
        start = np.asarray(first, dtype=np.int64)
        if not region[start[0], start[1]]:
            raise ValueError("first point must lie inside the region")
    chosen = [start]
    diff = pts - start
    mind = np.hypot(diff[:, 0], diff[:, 1])
    for _ in range(count - 1):
        # argmax returns the first maximum in row-major order == lexicographic
        k = int(np.argmax(mind))
        nxt = pts[k]
        chosen.append(nxt)
        diff = pts - nxt
        np.minimum(mind, np.hypot(diff[:, 0], diff[:, 1]), out=mind)
    return np.array(chosen, dtype=np.int64)


def gaussian_kernel1d(std: float) -> np.ndarray:
    """Discrete Gaussian taps truncated at +-ceil(3*std), renormalized to sum 1."""
    if std < 0:
        raise ValueError("std must be non-negative")
    if std == 0:
        return np.array([1.0])
    radius = int(np.ceil(3.0 * std))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / std) ** 2)
    return kernel / kernel.sum()


def gaussian_convolve(field: np.ndarray, std: float) -> np.ndarray:
    """Separable Gaussian smoothing with edge replication; identity at std=0."""
    field = np.asarray(field, dtype=np.float64)
    if std == 0:
        return field.copy()
    kernel = gaussian_kernel1d(std)
    out = ndimage.correlate1d(field, kernel, axis=0, mode="nearest")
    return ndimage.correlate1d(out, kernel, axis=1, mode="nearest")
