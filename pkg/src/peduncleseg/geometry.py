"""Spatial indexing and radius-based surface-normal estimation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .cloud_io import PointCloud


@dataclass
class NormalParams:
    radius_rn: float = 0.01
    viewpoint: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.viewpoint = np.asarray(self.viewpoint, dtype=np.float64).reshape(3)
        if self.radius_rn <= 0:
            raise ValueError("radius_rn must be > 0")


@dataclass
class NormalSet:
    """Per-point unit normals with surface-variation curvature.

    Entries with valid=False (fewer than 3 neighbours, or a collinear /
    coincident neighbourhood) carry a zero normal and zero curvature; they
    are flagged, never used silently.
    """

    normals: np.ndarray   # (N, 3)
    curvature: np.ndarray  # (N,), in [0, 1/3]
    valid: np.ndarray     # (N,) bool

    def __len__(self):
        return len(self.normals)


class SpatialIndex:
    """KD-tree over cloud positions answering inclusive radius queries."""

    def __init__(self, xyz):
        self.xyz = np.ascontiguousarray(xyz, dtype=np.float64)
        if len(self.xyz) == 0:
            raise ValueError("cannot index an empty cloud")
        self._tree = cKDTree(self.xyz)

    def __len__(self):
        return len(self.xyz)

    def radius_query(self, point, radius):
        """Sorted indices i with ||xyz[i] - point||_2 <= radius."""
        idx = self._tree.query_ball_point(np.asarray(point, dtype=np.float64),
                                          radius, return_sorted=True)
        return np.asarray(idx, dtype=np.int64)

    def radius_neighbors_csr(self, radius):
        """Neighbour lists of every indexed point against itself, in CSR form.

        Returns (indices, offsets): point i's neighbours (self included,
        ascending) are indices[offsets[i]:offsets[i+1]].
        """
        lists = self._tree.query_ball_point(self.xyz, radius, return_sorted=True)
        offsets = np.zeros(len(self.xyz) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum([len(l) for l in lists])
        indices = np.fromiter((i for l in lists for i in l), dtype=np.int64,
                              count=offsets[-1])
        return indices, offsets

    def knn_distances(self, k):
        """Distances to the k nearest other points, shape (N, k)."""
        if k >= len(self.xyz):
            raise ValueError(f"k={k} must be smaller than the point count "
                             f"{len(self.xyz)}")
        dists, _ = self._tree.query(self.xyz, k=k + 1)
        return dists[:, 1:]


def build_index(cloud: PointCloud) -> SpatialIndex:
    if len(cloud) == 0:
        raise ValueError("cannot index an empty cloud")
    return SpatialIndex(cloud.xyz)


# second-smallest eigenvalue below this fraction of the largest means the
# neighbourhood is collinear (or coincident) and has no stable normal
_DEGENERATE_EIG_RATIO = 1e-12


def estimate_normals(cloud: PointCloud, index: SpatialIndex,
                     params: NormalParams) -> NormalSet:
    """PCA normals over radius neighbourhoods, oriented toward the viewpoint.

    The normal is the smallest-eigenvalue eigenvector of the neighbourhood
    covariance, flipped so that n . (viewpoint - p) >= 0.  When that dot
    product is exactly zero the sign is canonical: positive z, else positive
    y, else positive x.  Curvature is lambda0 / (lambda0+lambda1+lambda2).
    """
    if len(cloud) == 0:
        raise ValueError("empty cloud")
    if len(index) != len(cloud):
        raise ValueError("index was built from a different cloud")
    xyz = cloud.xyz
    nbr_idx, nbr_off = index.radius_neighbors_csr(params.radius_rn)
    counts, _means, covs = _kernels.neighborhood_moments(xyz, nbr_idx, nbr_off)

    evals, evecs = np.linalg.eigh(covs)
    evals = np.maximum(evals, 0.0)
    normals = np.ascontiguousarray(evecs[:, :, 0])
    total = evals.sum(axis=1)

    valid = (counts >= 3) & (total > 0.0) \
        & (evals[:, 1] > _DEGENERATE_EIG_RATIO * evals[:, 2])

    curvature = np.zeros(len(cloud))
    np.divide(evals[:, 0], total, out=curvature, where=valid)
    curvature = np.clip(curvature, 0.0, 1.0 / 3.0)
    curvature[~valid] = 0.0

    toward = params.viewpoint[None, :] - xyz
    orient = np.einsum("ij,ij->i", normals, toward)
    flip = orient < 0.0
    tie = orient == 0.0
    if np.any(tie):
        nz = normals[:, 2]
        ny = normals[:, 1]
        nx = normals[:, 0]
        canon = np.where(nz != 0.0, nz, np.where(ny != 0.0, ny, nx))
        flip = flip | (tie & (canon < 0.0))
    normals[flip] *= -1.0
    normals[~valid] = 0.0
    return NormalSet(normals, curvature, valid)
