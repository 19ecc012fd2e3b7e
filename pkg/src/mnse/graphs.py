"""Affinity graphs and Laplacians over the stacked multi-modal sample ordering.

The stacked ordering lists modality 0's rows, then modality 1's, and so on;
every N x N matrix in this package uses it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist, pdist

from .dataset import MultiModalDataset

__all__ = [
    "AffinityMatrix",
    "LaplacianSet",
    "default_theta",
    "within_class_affinity",
    "between_class_indicator",
    "cross_modal_within",
    "cross_modal_between",
    "laplacian",
    "assemble_block_diagonal",
    "assemble_cross",
    "build_laplacians",
]


@dataclass(frozen=True)
class AffinityMatrix:
    weights: np.ndarray
    row_modality: int = 0
    col_modality: int = 0
    row_ids: np.ndarray | None = None
    col_ids: np.ndarray | None = None

    def __post_init__(self):
        W = np.array(self.weights, dtype=float)
        if W.ndim != 2:
            raise ValueError("affinity weights must be a matrix")
        if not np.all(np.isfinite(W)) or np.any(W < 0):
            raise ValueError("affinity weights must be finite and non-negative")
        W.setflags(write=False)
        object.__setattr__(self, "weights", W)

    @property
    def shape(self):
        return self.weights.shape


@dataclass(frozen=True)
class LaplacianSet:
    """The four N x N Laplacians of the objective, over the stacked ordering."""

    within: np.ndarray
    between: np.ndarray
    cross_within: np.ndarray
    cross_between: np.ndarray
    sizes: tuple
    stacked_ids: np.ndarray  # (N, 2) rows of (modality, sample id)
    thetas: tuple = ()

    @property
    def n(self) -> int:
        return int(sum(self.sizes))

    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)


def _gaussian(sqdist: np.ndarray, theta: float) -> np.ndarray:
    return np.exp(-sqdist / theta**2)


def default_theta(X: np.ndarray, labels) -> float:
    """Median nonzero same-class pairwise distance (all pairs, then 1.0, as fallbacks)."""
    labels = np.asarray(labels)
    n = X.shape[0]
    if n < 2:
        return 1.0
    dist = pdist(X)
    iu, ju = np.triu_indices(n, 1)
    same = labels[iu] == labels[ju]
    for candidates in (dist[same], dist):
        nz = candidates[candidates > 0]
        if nz.size:
            return float(np.median(nz))
    return 1.0


def within_class_affinity(X, labels, theta: float, modality: int = 0,
                          ids=None) -> AffinityMatrix:
    """Gaussian weights between same-class rows of one modality, zero across classes.

    Self-pairs get weight 1; they cancel in the Laplacian.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    W = _gaussian(cdist(X, X, "sqeuclidean"), theta)
    W[labels[:, None] != labels[None, :]] = 0.0
    W = 0.5 * (W + W.T)
    return AffinityMatrix(W, modality, modality, ids, ids)


def between_class_indicator(labels, modality: int = 0, ids=None) -> AffinityMatrix:
    labels = np.asarray(labels)
    W = (labels[:, None] != labels[None, :]).astype(float)
    return AffinityMatrix(W, modality, modality, ids, ids)


def cross_modal_within(ds: MultiModalDataset, v: int, u: int, theta: float) -> AffinityMatrix:
    """Same-class Gaussian affinities between modality-v rows and modality-u rows.

    The distance between samples ``a`` (row of v) and ``b`` (row of u) is
    measured in the first modality, in the order v, u, then the rest by
    index, that observes both; pairs with no such modality get weight 0.
    """
    if v == u:
        raise ValueError("cross-modal affinity needs two distinct modalities")
    if not theta > 0:
        raise ValueError("theta must be positive")
    ids_v, ids_u = ds.sample_ids[v], ds.sample_ids[u]
    if ids_v.size == 0 or ids_u.size == 0:
        raise ValueError("empty modality")
    same = ds.labels_of(v)[:, None] == ds.labels_of(u)[None, :]
    W = np.zeros((ids_v.size, ids_u.size))
    done = np.zeros_like(W, dtype=bool)
    order = [v, u] + [r for r in range(ds.num_modalities) if r not in (v, u)]
    for r in order:
        index = ds.row_index(r)
        ra = np.array([index.get(int(i), -1) for i in ids_v])
        rb = np.array([index.get(int(i), -1) for i in ids_u])
        ia, ib = np.flatnonzero(ra >= 0), np.flatnonzero(rb >= 0)
        if ia.size == 0 or ib.size == 0:
            continue
        Xr = ds.features[r]
        block = _gaussian(cdist(Xr[ra[ia]], Xr[rb[ib]], "sqeuclidean"), theta)
        sub = np.ix_(ia, ib)
        fresh = ~done[sub] & same[sub]
        W[sub] = np.where(fresh, block, W[sub])
        done[sub] |= same[sub]
    return AffinityMatrix(W, v, u, ids_v, ids_u)


def cross_modal_between(labels_v, labels_u, v: int = 0, u: int = 1) -> AffinityMatrix:
    labels_v, labels_u = np.asarray(labels_v), np.asarray(labels_u)
    W = (labels_v[:, None] != labels_u[None, :]).astype(float)
    return AffinityMatrix(W, v, u)


def laplacian(W) -> np.ndarray:
    """``D - W`` with ``D`` the diagonal of row sums."""
    W = W.weights if isinstance(W, AffinityMatrix) else np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError("Laplacian needs a square matrix")
    if not np.array_equal(W, W.T):
        raise ValueError("Laplacian needs a symmetric weight matrix")
    return np.diag(W.sum(axis=1)) - W


def assemble_block_diagonal(blocks) -> np.ndarray:
    mats = [np.atleast_2d(np.asarray(getattr(b, "weights", b), dtype=float)) for b in blocks]
    for B in mats:
        if B.shape[0] != B.shape[1]:
            raise ValueError("diagonal blocks must be square")
    return scipy.linalg.block_diag(*mats)


def assemble_cross(blocks: dict, sizes):
    """Place off-diagonal blocks (v, u) into an N x N matrix and take its Laplacian.

    Missing (u, v) blocks are filled with the transpose of (v, u). The result
    is symmetrised as ``(W + W.T) / 2`` so the Laplacian is PSD even when the
    two directions were computed differently.
    """
    sizes = [int(s) for s in sizes]
    off = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    V = len(sizes)
    W = np.zeros((off[-1], off[-1]))
    for v in range(V):
        for u in range(V):
            if u == v:
                continue
            if (v, u) in blocks:
                B = blocks[(v, u)]
                B = np.asarray(getattr(B, "weights", B), dtype=float)
            elif (u, v) in blocks:
                B = blocks[(u, v)]
                B = np.asarray(getattr(B, "weights", B), dtype=float).T
            else:
                continue
            if B.shape != (sizes[v], sizes[u]):
                raise ValueError(
                    f"block ({v}, {u}) has shape {B.shape}, expected {(sizes[v], sizes[u])}"
                )
            W[off[v]:off[v + 1], off[u]:off[u + 1]] = B
    W = 0.5 * (W + W.T)
    return W, laplacian(W)


def build_laplacians(ds: MultiModalDataset, thetas=None, cross_thetas=None) -> LaplacianSet:
    """All four Laplacians for a training set.

    ``thetas`` defaults per modality to :func:`default_theta`; the cross-modal
    scale for (v, u) defaults to the mean of the two modality scales.
    """
    V = ds.num_modalities
    if thetas is None:
        thetas = [default_theta(ds.features[v], ds.labels_of(v)) for v in range(V)]
    thetas = tuple(float(t) for t in thetas)
    Lw, Lb = [], []
    for v in range(V):
        lab, ids = ds.labels_of(v), ds.sample_ids[v]
        Lw.append(laplacian(within_class_affinity(ds.features[v], lab, thetas[v], v, ids)))
        Lb.append(laplacian(between_class_indicator(lab, v, ids)))
    cw, cb = {}, {}
    for v in range(V):
        for u in range(V):
            if u == v or ds.sizes[v] == 0 or ds.sizes[u] == 0:
                continue
            if cross_thetas is not None:
                th = float(cross_thetas[(v, u)] if isinstance(cross_thetas, dict) else cross_thetas)
            else:
                th = 0.5 * (thetas[v] + thetas[u])
            cw[(v, u)] = cross_modal_within(ds, v, u, th)
            cb[(v, u)] = cross_modal_between(ds.labels_of(v), ds.labels_of(u), v, u)
    _, Lcw = assemble_cross(cw, ds.sizes)
    _, Lcb = assemble_cross(cb, ds.sizes)
    stacked = np.concatenate(
        [np.column_stack([np.full(n, v), ds.sample_ids[v]]) for v, n in enumerate(ds.sizes)]
    ).astype(np.int64)
    return LaplacianSet(
        within=assemble_block_diagonal(Lw),
        between=assemble_block_diagonal(Lb),
        cross_within=Lcw,
        cross_between=Lcb,
        sizes=ds.sizes,
        stacked_ids=stacked,
        thetas=thetas,
    )
