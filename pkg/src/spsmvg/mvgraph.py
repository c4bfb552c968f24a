"""Multi-view graph construction.

The l views of one image become the nodes of a small fully connected graph.
Edge weights are row-softmaxed cosine similarities; weak edges below a
threshold are dropped, except edges touching the central (deep) view and the
diagonal, which are always retained so the graph stays connected. The
thresholded matrix is symmetrized and renormalized into the propagation
operator D^{-1/2} (A + I) D^{-1/2} consumed by both GCN layers.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateViewError
from .numerics import softmax_row

__all__ = [
    "cosine_sim",
    "build_affinity",
    "apply_threshold",
    "normalize",
    "build_adjacency",
]


def cosine_sim(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateViewError("cosine similarity undefined for a zero vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def build_affinity(V: np.ndarray) -> np.ndarray:
    """Row-softmaxed cosine-similarity matrix of the view rows (l x l)."""
    V = np.asarray(V, dtype=np.float64)
    norms = np.linalg.norm(V, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateViewError("view matrix contains an all-zero row")
    U = V / norms[:, None]
    sims = np.clip(U @ U.T, -1.0, 1.0)
    return softmax_row(sims)


def apply_threshold(A: np.ndarray, lam: float, central_index: int = 0) -> np.ndarray:
    """Zero entries below lam, keeping the diagonal and the central row/column.

    No renormalization happens afterwards; the +I shift and the degree
    normalization in :func:`normalize` absorb the lost mass.
    """
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"threshold must be in [0, 1), got {lam}")
    A = np.asarray(A, dtype=np.float64)
    keep = A >= lam
    keep[central_index, :] = True
    keep[:, central_index] = True
    np.fill_diagonal(keep, True)
    return A * keep


def normalize(A_thr: np.ndarray) -> np.ndarray:
    """Symmetric GCN normalization of a thresholded affinity matrix.

    A_thr is symmetrized first (row-softmax output is not symmetric), then
    shifted by I; degrees are >= 1 so the inverse square root is safe.
    """
    A_thr = np.asarray(A_thr, dtype=np.float64)
    A_bar = 0.5 * (A_thr + A_thr.T)
    A_tilde = A_bar + np.eye(A_bar.shape[0])
    d = A_tilde.sum(axis=1)
    dm = d**-0.5
    return dm[:, None] * A_tilde * dm[None, :]


def build_adjacency(V: np.ndarray, lam: float, central_index: int = 0) -> np.ndarray:
    """Affinity -> threshold -> normalize, the full graph-building chain."""
    return normalize(apply_threshold(build_affinity(V), lam, central_index))
