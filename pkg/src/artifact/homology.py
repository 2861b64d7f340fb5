"""Zero-dimensional persistent homology of image point clouds.

Treats each image as one point (vectorized, optionally downsampled) and
tracks how connected components of the Vietoris-Rips filtration merge as
the distance threshold grows. Every component is born at 0; the finite
death times are exactly the minimum-spanning-tree edge weights of the
cloud, computed by sorting edges and merging with union-find under the
elder rule (the younger, higher-indexed component dies). One component
survives forever. Faster merging (smaller area under the normalized
component-count curve) indicates a topologically simpler data manifold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import pdist, squareform


@dataclass
class PointCloud:
    points: np.ndarray          # (n, d)
    label: str = ""


@dataclass
class Barcode:
    """Dimension-0 intervals (birth, death); births are all 0, the deaths
    ascend and exactly one is infinite. ``scale_max`` is the largest
    finite death, used to normalize the filtration axis."""

    bars: list
    scale_max: float


def image_cloud(images, downsample_to=None, label: str = "") -> PointCloud:
    """Stack magnitude images into a point cloud, one row per image,
    after optional bilinear downsampling."""
    if len(images) == 0:
        raise ValueError("need at least one image")
    rows = []
    for img in images:
        mag = np.abs(np.asarray(img)).astype(np.float64)
        if downsample_to is not None and tuple(downsample_to) != mag.shape:
            h, w = downsample_to
            ii = np.linspace(0, mag.shape[0] - 1, h)
            jj = np.linspace(0, mag.shape[1] - 1, w)
            coords = np.meshgrid(ii, jj, indexing="ij")
            mag = ndimage.map_coordinates(mag, coords, order=1, mode="nearest")
        rows.append(mag.ravel())
    return PointCloud(np.stack(rows), label)


def pairwise_distances(pc: PointCloud) -> np.ndarray:
    """Symmetric Euclidean distance matrix with zero diagonal."""
    pts = np.asarray(pc.points, dtype=np.float64)
    if not np.all(np.isfinite(pts)):
        raise ValueError("point cloud contains non-finite values")
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("point cloud must be an (n >= 2, d) matrix")
    return squareform(pdist(pts, metric="euclidean"))


def betti0_barcode(dist: np.ndarray) -> Barcode:
    """Dimension-0 Vietoris-Rips persistence from a distance matrix."""
    dist = np.asarray(dist, dtype=np.float64)
    n = dist.shape[0]
    if dist.ndim != 2 or dist.shape[1] != n or n < 2:
        raise ValueError("need a square distance matrix over >= 2 points")

    iu, ju = np.triu_indices(n, k=1)
    weights = dist[iu, ju]
    order = np.argsort(weights, kind="stable")

    parent = np.arange(n)

    def find(v):
        root = v
        while parent[root] != root:
            root = parent[root]
        while parent[v] != root:
            parent[v], v = root, parent[v]
        return root

    deaths = []
    for e in order:
        ri, rj = find(iu[e]), find(ju[e])
        if ri == rj:
            continue
        # elder rule: the component with the larger representative index
        # (the younger one) dies and is absorbed
        parent[max(ri, rj)] = min(ri, rj)
        deaths.append(float(weights[e]))
        if len(deaths) == n - 1:
            break
    deaths.sort()
    bars = [(0.0, d) for d in deaths] + [(0.0, np.inf)]
    return Barcode(bars, deaths[-1] if deaths else 0.0)


def rescale(bc: Barcode, scale_max: float) -> Barcode:
    """The same bars with a different normalization scale. Comparing
    clouds on one axis (as the barcode figures do) requires a shared
    scale, typically the max finite death across the compared barcodes;
    per-cloud scales would hide absolute merge speeds."""
    if scale_max < 0:
        raise ValueError("scale_max must be nonnegative")
    return Barcode(list(bc.bars), scale_max)


def betti0_curve(bc: Barcode, normalize: bool = False) -> list:
    """Step function beta_0(eps) = #{bars with death > eps}, returned as
    (eps, count) breakpoints. With ``normalize`` the eps axis is divided
    by the largest finite death so curves are comparable on [0, 1]."""
    deaths = np.array([d for _, d in bc.bars if np.isfinite(d)])
    scale = bc.scale_max if (normalize and bc.scale_max > 0) else 1.0
    breakpoints = np.unique(np.concatenate([[0.0], deaths / scale]))
    curve = []
    for eps in breakpoints:
        count = 1 + int(np.sum(deaths / scale > eps))
        curve.append((float(eps), count))
    return curve


def complexity_summary(bc: Barcode) -> float:
    """Area under the normalized beta_0(eps)/n curve over eps in [0, 1].

    Each finite bar contributes its normalized death; the surviving bar
    contributes the full unit span, so the value lies in (0, 1] and
    smaller means the cloud merges faster.
    """
    deaths = np.array([d for _, d in bc.bars if np.isfinite(d)])
    n = len(bc.bars)
    if bc.scale_max > 0:
        normalized = np.clip(deaths / bc.scale_max, 0.0, 1.0)
    else:
        normalized = np.zeros_like(deaths)
    return float((1.0 + normalized.sum()) / n)
