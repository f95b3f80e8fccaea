"""Curve-quality scoring: Hausdorff distance, exact-assignment 2-Wasserstein
distance, empirical curve MSE, and replicate summaries.

Scores are kept on their natural scale internally; the x100 convention is
applied only in reporting fields.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionMismatch, EmptySet, SizeMismatch, TooFew

__all__ = ["ScoreReport", "hausdorff", "wasserstein2", "empirical_mse",
           "replicate_stats", "score_curves", "SUBSAMPLE_CAP"]

SUBSAMPLE_CAP = 1024


@dataclass
class ScoreReport:
    hausdorff_x100: float
    wasserstein2_x100: float
    mse: float
    subsample_cap: int = SUBSAMPLE_CAP

    def to_record(self):
        return {
            "hausdorff_x100": self.hausdorff_x100,
            "wasserstein2_x100": self.wasserstein2_x100,
            "mse": self.mse,
            "subsample_cap": self.subsample_cap,
        }


def _as_points(A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    return A


def hausdorff(A, B, chunk=512):
    """max over both directions of the farthest nearest-neighbor distance;
    exact over all pairs."""
    A, B = _as_points(A), _as_points(B)
    if A.size == 0 or B.size == 0:
        raise EmptySet("hausdorff needs two nonempty point sets")
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch("point sets must share a dimension")
    sup_a = 0.0
    inf_b = np.full(B.shape[0], np.inf)
    for start in range(0, A.shape[0], chunk):
        blk = A[start:start + chunk]
        d2 = ((blk[:, None, :] - B[None, :, :]) ** 2).sum(axis=2)
        sup_a = max(sup_a, float(d2.min(axis=1).max()))
        np.minimum(inf_b, d2.min(axis=0), out=inf_b)
    return float(np.sqrt(max(sup_a, inf_b.max())))


def _subsample(P, cap, seed):
    if P.shape[0] <= cap:
        return P
    idx = np.random.default_rng(seed).choice(P.shape[0], size=cap, replace=False)
    return P[np.sort(idx)]


def wasserstein2(A, B, cap=SUBSAMPLE_CAP, seed=0):
    """Exact 2-Wasserstein distance between equal-size point sets: square root
    of the minimal mean squared cost over perfect matchings (dense
    shortest-augmenting-path assignment). Sets larger than `cap` are
    deterministically subsampled without replacement first.
    """
    A, B = _as_points(A), _as_points(B)
    if A.size == 0 or B.size == 0:
        raise EmptySet("wasserstein2 needs two nonempty point sets")
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch("point sets must share a dimension")
    A = _subsample(A, cap, seed)
    B = _subsample(B, cap, seed + 1)
    if A.shape[0] != B.shape[0]:
        raise SizeMismatch(f"sizes {A.shape[0]} and {B.shape[0]} after resampling to cap {cap}")
    cost = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2)
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].mean()))


def empirical_mse(truth, estimate):
    """Mean squared Euclidean row distance."""
    T, E = _as_points(truth), _as_points(estimate)
    if T.shape != E.shape:
        raise DimensionMismatch(f"shapes differ: {T.shape} vs {E.shape}")
    return float(((T - E) ** 2).sum(axis=1).mean())


def replicate_stats(scores):
    """(mean, sample std) over replicate scores; needs at least two."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size < 2:
        raise TooFew("need at least two replicate scores")
    return float(s.mean()), float(s.std(ddof=1))


def score_curves(estimate, truth, cap=SUBSAMPLE_CAP, seed=0):
    """Bundle the three scores into a ScoreReport (x100 convention applied)."""
    h = hausdorff(estimate, truth)
    w = wasserstein2(estimate, truth, cap=cap, seed=seed)
    m = empirical_mse(truth, estimate) if np.shape(estimate) == np.shape(truth) else np.nan
    return ScoreReport(100.0 * h, 100.0 * w, m, subsample_cap=cap)
