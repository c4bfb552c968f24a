"""Global per-series ranking via Bradley-Terry fitting of pairwise wins.

The siamese head is not structurally anti-symmetric, so both orderings of
each pair are evaluated and averaged into a symmetrized win matrix whose
entries act as fractional win counts for a minorization-maximization fit of
the Bradley-Terry scores.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import PairDataset
from .errors import EvaluationError
from .model import ModelParams, forward_pairs
from .training import TrainConfig
from .errors import NonConvergenceWarning

__all__ = [
    "SeriesResult",
    "pairwise_probs",
    "fit_bradley_terry",
    "rank_series",
    "selection_rate",
]


@dataclass(frozen=True)
class SeriesResult:
    series_id: str
    photos: tuple[str, ...]
    scores: np.ndarray  # positive, sums to 1
    order: tuple[int, ...]  # photo indices, descending score
    best: int  # = order[0]


def pairwise_probs(
    photo_ids: list[str],
    dataset: PairDataset,
    params: ModelParams,
    config: TrainConfig,
) -> np.ndarray:
    """Symmetrized m x m win matrix: P[i,j] = (f(i,j) + 1 - f(j,i)) / 2."""
    m = len(photo_ids)
    if m < 2:
        raise EvaluationError(f"a series needs at least 2 photos, got {m}")
    lam = config.resolve_lam(params.hyper.l)
    firsts, seconds = [], []
    for i in range(m):
        for j in range(m):
            if i != j:
                firsts.append(photo_ids[i])
                seconds.append(photo_ids[j])
    raws_a = dataset.batch_images(firsts)
    raws_b = dataset.batch_images(seconds)
    raws = {name: np.concatenate([raws_a[name], raws_b[name]]) for name in raws_a}
    f, _ = forward_pairs(raws, params, lam)
    F = np.zeros((m, m))
    k = 0
    for i in range(m):
        for j in range(m):
            if i != j:
                F[i, j] = f[k]
                k += 1
    P = np.zeros((m, m))
    iu = ~np.eye(m, dtype=bool)
    P[iu] = (F[iu] + (1.0 - F.T[iu])) / 2.0
    return P


def fit_bradley_terry(
    P: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 1000,
    s0: np.ndarray | None = None,
) -> np.ndarray:
    """MM fit treating P[i,j] as the fractional win count of i over j.

    Update: s_i <- sum_j w_ij / sum_j (w_ij + w_ji) / (s_i + s_j), then
    renormalize to the simplex. Converges for connected comparison graphs;
    interior probabilities keep the graph connected.
    """
    P = np.asarray(P, dtype=np.float64)
    m = P.shape[0]
    if m == 1:
        return np.ones(1)
    off = ~np.eye(m, dtype=bool)
    w = P * off
    totals = w + w.T  # comparisons per pair
    s = np.full(m, 1.0 / m) if s0 is None else np.asarray(s0, dtype=np.float64) / np.sum(s0)
    for _ in range(max_iter):
        denom = np.where(off, totals / (s[:, None] + s[None, :]), 0.0).sum(axis=1)
        s_new = w.sum(axis=1) / denom
        s_new /= s_new.sum()
        delta = np.max(np.abs(s_new - s))
        s = s_new
        if delta < tol:
            return s
    warnings.warn(
        f"Bradley-Terry MM did not converge in {max_iter} iterations "
        f"(last delta {delta:.3e})",
        NonConvergenceWarning,
    )
    return s


def rank_series(
    P: np.ndarray,
    series_id: str = "",
    photos: tuple[str, ...] = (),
    tol: float = 1e-8,
    max_iter: int = 1000,
) -> SeriesResult:
    """Fit scores and sort descending; ties break by ascending photo index."""
    scores = fit_bradley_terry(P, tol=tol, max_iter=max_iter)
    order = tuple(sorted(range(len(scores)), key=lambda i: (-scores[i], i)))
    if not photos:
        photos = tuple(str(i) for i in range(len(scores)))
    return SeriesResult(series_id, photos, scores, order, order[0])


def selection_rate(results: list[SeriesResult], ground_truth_best: list[int]) -> float:
    """Fraction of series whose ranked-best photo index matches the truth."""
    if len(results) != len(ground_truth_best):
        raise EvaluationError(
            f"got {len(results)} results but {len(ground_truth_best)} truth entries"
        )
    hits = sum(r.best == t for r, t in zip(results, ground_truth_best))
    return hits / len(results)
