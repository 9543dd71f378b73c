"""Distance metrics and donor selection for hot-deck matching.

A target with a missing outcome is matched against a pool of donors
(fully observed cases) using one of three families of distance:

``pmm``
    Predictive distance only: the absolute difference between the model
    prediction for a donor and the model prediction for the target.
``ranked``
    Convex combination of the *ranks* of the predictive and Mahalanobis
    distances, ``blend * rank(pd) + (1 - blend) * rank(md)``.  Rank ties
    are broken by a uniform random permutation, so ranks are always a
    permutation of 1..n.
``scaled``
    Convex combination of the *standardized* distances,
    ``blend * zscore(pd) + (1 - blend) * zscore(md)`` using the mean and
    sample (n-1) standard deviation of each distance vector.

The Mahalanobis distance between predictor vectors x and y is
``sqrt((x - y)' C^-1 (x - y))`` where C is the sample covariance of the
predictor space, ridge-regularized when near singular.

All operations are pure given an explicit ``numpy.random.Generator`` and
keep no internal state.  The ``*_rows`` variants treat each row as an
independent target matched against the same donor pool; they are the
batched building blocks used by the imputation engine, and the
one-dimensional public operations are thin wrappers around them.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

PREDICTIVE = "predictive"
MAHALANOBIS = "mahalanobis"
RANKED_BLEND = "ranked_blend"
SCALED_BLEND = "scaled_blend"

PMM = "pmm"
RANKED = "ranked"
SCALED = "scaled"
FAMILIES = (PMM, RANKED, SCALED)

#: Relative ridge added to a near-singular covariance before inversion.
COV_RIDGE = 1e-6

#: Exact header of the distance-table CSV export.
DISTANCE_TABLE_HEADER = ("index", "pd", "md")


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """Sample covariance of the predictor space with its cached inverse."""

    matrix: np.ndarray
    inverse: np.ndarray
    dimension: int


@dataclass(frozen=True, eq=False)
class DistanceVector:
    """Distances from one target to every donor, tagged with the metric kind."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError(f"distance values must be one-dimensional, got shape {values.shape}")
        if self.kind not in (PREDICTIVE, MAHALANOBIS, RANKED_BLEND, SCALED_BLEND):
            raise ValueError(f"unknown distance kind {self.kind!r}")
        if self.kind in (PREDICTIVE, MAHALANOBIS) and np.any(values < 0):
            raise ValueError(f"{self.kind} distances must be non-negative")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class BlendSpec:
    """Donor-selection recipe: metric family, weight on the predictive side, donor count.

    ``blend`` is the weight on the predictive-distance component; 1 selects on
    the predictive distance alone, 0 on the Mahalanobis distance alone.  It is
    ignored for the plain ``pmm`` family.
    """

    family: str
    blend: float = 1.0
    k: int = 5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if not 0.0 <= self.blend <= 1.0:
            raise ValueError(f"blend must lie in [0, 1], got {self.blend}")
        if self.k < 1:
            raise ValueError(f"k must be a positive donor count, got {self.k}")

    @property
    def label(self) -> str:
        if self.family == PMM:
            return PMM
        return f"{self.family}_{self.blend:g}"


def covariance_estimate(predictors, ridge: float = COV_RIDGE) -> CovarianceEstimate:
    """Estimate the predictor covariance (n-1 divisor) and its inverse.

    A ridge of ``ridge * mean(diag) * I`` is added before inversion when the
    plain sample covariance cannot be inverted reliably; if even the ridged
    matrix stays singular (every column constant, say) a ValueError is raised.
    """
    x = np.asarray(predictors, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"predictors must be an n-by-p matrix, got shape {x.shape}")
    n, p = x.shape
    if n < 2:
        raise ValueError(f"need at least 2 rows to estimate a covariance, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("predictors contain non-finite values")
    matrix = np.cov(x, rowvar=False, ddof=1).reshape(p, p)
    inverse = _checked_inverse(matrix)
    if inverse is None:
        scale = float(np.mean(np.diag(matrix)))
        matrix = matrix + ridge * scale * np.eye(p)
        inverse = _checked_inverse(matrix)
        if inverse is None:
            raise ValueError("covariance is singular even after ridge regularization")
    return CovarianceEstimate(matrix=matrix, inverse=inverse, dimension=p)


def _checked_inverse(matrix):
    """Inverse of a symmetric matrix, or None when inversion is unreliable."""
    p = matrix.shape[0]
    try:
        inverse = np.linalg.inv(matrix)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(inverse)):
        return None
    inverse = (inverse + inverse.T) / 2.0
    if not np.allclose(inverse @ matrix, np.eye(p), atol=1e-8):
        return None
    return inverse


def mahalanobis_distance(x, y, cov: CovarianceEstimate) -> float:
    """Covariance-scaled distance ``sqrt((x - y)' C^-1 (x - y))`` between two points."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != (cov.dimension,) or y.shape != (cov.dimension,):
        raise ValueError(
            f"points must have dimension {cov.dimension}, got {x.shape} and {y.shape}"
        )
    diff = x - y
    d2 = float(diff @ cov.inverse @ diff)
    return math.sqrt(max(d2, 0.0))


def mahalanobis_to_pool(target, pool, cov: CovarianceEstimate) -> np.ndarray:
    """Mahalanobis distance from one target vector to every row of ``pool``."""
    target = np.asarray(target, dtype=float).ravel()
    pool = np.asarray(pool, dtype=float)
    if target.shape != (cov.dimension,) or pool.ndim != 2 or pool.shape[1] != cov.dimension:
        raise ValueError(
            f"expected a {cov.dimension}-vector and an n-by-{cov.dimension} pool, "
            f"got {target.shape} and {pool.shape}"
        )
    diff = pool - target
    d2 = np.einsum("ij,jk,ik->i", diff, cov.inverse, diff)
    return np.sqrt(np.clip(d2, 0.0, None))


def pairwise_mahalanobis(targets, pool, cov: CovarianceEstimate) -> np.ndarray:
    """Matrix of Mahalanobis distances, one row per target, one column per donor."""
    targets = np.asarray(targets, dtype=float)
    pool = np.asarray(pool, dtype=float)
    if targets.ndim != 2 or pool.ndim != 2 or targets.shape[1] != pool.shape[1]:
        raise ValueError(f"incompatible shapes {targets.shape} and {pool.shape}")
    if targets.shape[1] != cov.dimension:
        raise ValueError(f"points have dimension {targets.shape[1]}, covariance {cov.dimension}")
    diff = targets[:, None, :] - pool[None, :, :]
    d2 = np.einsum("mnj,jk,mnk->mn", diff, cov.inverse, diff)
    return np.sqrt(np.clip(d2, 0.0, None))


def order_rows(values, rng) -> np.ndarray:
    """Row-wise ascending ordering with ties permuted uniformly at random.

    Each row is first shuffled by an independent uniform permutation and then
    stably sorted, so tied entries appear in uniformly random relative order.
    """
    v = np.asarray(values, dtype=float)
    perm = np.argsort(rng.random(v.shape), axis=1)
    shuffled = np.take_along_axis(v, perm, axis=1)
    inner = np.argsort(shuffled, axis=1, kind="stable")
    return np.take_along_axis(perm, inner, axis=1)


def rank_rows(values, rng) -> np.ndarray:
    """Row-wise ranks 1..n with ties broken by a uniform random permutation."""
    order = order_rows(values, rng)
    ranks = np.empty(order.shape, dtype=float)
    np.put_along_axis(ranks, order, np.arange(1.0, order.shape[1] + 1.0)[None, :], axis=1)
    return ranks


def blend_ranked_rows(pd_rows, md_rows, blend: float, rng) -> np.ndarray:
    """Rank-blended distances for a batch of targets (one target per row)."""
    pd_rows = np.asarray(pd_rows, dtype=float)
    md_rows = np.asarray(md_rows, dtype=float)
    if pd_rows.shape != md_rows.shape:
        raise ValueError(f"distance shapes differ: {pd_rows.shape} vs {md_rows.shape}")
    if not 0.0 <= blend <= 1.0:
        raise ValueError(f"blend must lie in [0, 1], got {blend}")
    return blend * rank_rows(pd_rows, rng) + (1.0 - blend) * rank_rows(md_rows, rng)


def blend_scaled_rows(pd_rows, md_rows, blend: float) -> np.ndarray:
    """Standardization-blended distances for a batch of targets."""
    pd_rows = np.asarray(pd_rows, dtype=float)
    md_rows = np.asarray(md_rows, dtype=float)
    if pd_rows.shape != md_rows.shape:
        raise ValueError(f"distance shapes differ: {pd_rows.shape} vs {md_rows.shape}")
    if pd_rows.shape[1] < 2:
        raise ValueError("scaled blending needs at least 2 donors")
    if not 0.0 <= blend <= 1.0:
        raise ValueError(f"blend must lie in [0, 1], got {blend}")
    out = np.zeros_like(pd_rows)
    if blend > 0.0:
        out += blend * _standardize_rows(pd_rows, "predictive")
    if blend < 1.0:
        out += (1.0 - blend) * _standardize_rows(md_rows, "Mahalanobis")
    return out


def _standardize_rows(rows, label):
    centered = rows - rows.mean(axis=1, keepdims=True)
    sd = rows.std(axis=1, ddof=1, keepdims=True)
    degenerate = sd == 0.0
    if np.any(degenerate):
        # All donors equidistant on this metric; fall back to the centered
        # (identically zero) vector rather than dividing by zero.
        warnings.warn(
            f"{label} distances are constant for {int(degenerate.sum())} target row(s); "
            "using the centered unscaled values",
            RuntimeWarning,
            stacklevel=3,
        )
        sd = np.where(degenerate, 1.0, sd)
    return centered / sd


def select_rows(dist_rows, k: int, rng) -> np.ndarray:
    """Indices of the k smallest entries per row, boundary ties randomized."""
    dist_rows = np.asarray(dist_rows, dtype=float)
    n = dist_rows.shape[1]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in 1..{n}")
    return order_rows(dist_rows, rng)[:, :k]


def _require_kind(vec: DistanceVector, kind: str, arg: str):
    if not isinstance(vec, DistanceVector):
        raise TypeError(f"{arg} must be a DistanceVector, got {type(vec).__name__}")
    if vec.kind != kind:
        raise ValueError(f"{arg} must have kind {kind!r}, got {vec.kind!r}")


def predictive_distances(donor_preds, target_pred: float) -> DistanceVector:
    """Absolute differences between donor predictions and the target prediction."""
    donor_preds = np.asarray(donor_preds, dtype=float).ravel()
    return DistanceVector(values=np.abs(donor_preds - float(target_pred)), kind=PREDICTIVE)


def mahalanobis_distances(target, donors, cov: CovarianceEstimate) -> DistanceVector:
    """Mahalanobis distances from a target's predictors to every donor's predictors."""
    return DistanceVector(values=mahalanobis_to_pool(target, donors, cov), kind=MAHALANOBIS)


def blend_ranked(pd: DistanceVector, md: DistanceVector, blend: float, rng) -> DistanceVector:
    """Blend the ranks of a predictive and a Mahalanobis distance vector.

    Returns ``blend * rank(pd) + (1 - blend) * rank(md)`` where ranks run 1..n
    and ties are broken by a uniform random permutation drawn from ``rng``.
    """
    _require_kind(pd, PREDICTIVE, "pd")
    _require_kind(md, MAHALANOBIS, "md")
    if len(pd) != len(md):
        raise ValueError(f"distance lengths differ: {len(pd)} vs {len(md)}")
    values = blend_ranked_rows(pd.values[None, :], md.values[None, :], blend, rng)[0]
    return DistanceVector(values=values, kind=RANKED_BLEND)


def blend_scaled(pd: DistanceVector, md: DistanceVector, blend: float) -> DistanceVector:
    """Blend standardized predictive and Mahalanobis distance vectors.

    Each vector is centered and divided by its sample (n-1) standard
    deviation; a constant vector on a side with nonzero weight degrades to the
    centered values with a RuntimeWarning.
    """
    _require_kind(pd, PREDICTIVE, "pd")
    _require_kind(md, MAHALANOBIS, "md")
    if len(pd) != len(md):
        raise ValueError(f"distance lengths differ: {len(pd)} vs {len(md)}")
    values = blend_scaled_rows(pd.values[None, :], md.values[None, :], blend)[0]
    return DistanceVector(values=values, kind=SCALED_BLEND)


def select_donors(distances, k: int, rng) -> np.ndarray:
    """Indices of the k smallest distances, sorted ascending.

    Ties (anywhere, including at the selection boundary) are broken uniformly
    at random via ``rng``; the result is deterministic for a fixed seed.
    """
    values = distances.values if isinstance(distances, DistanceVector) else np.asarray(distances, dtype=float)
    return select_rows(values[None, :], k, rng)[0]


def distance_table(donors, donor_preds, target, target_pred: float, cov: CovarianceEstimate) -> np.ndarray:
    """Per-donor (index, pd, md) rows for scatter exports.

    ``pd`` is the absolute difference between each donor's prediction and the
    target's prediction, ``md`` the Mahalanobis distance between the predictor
    vectors.
    """
    donors = np.asarray(donors, dtype=float)
    donor_preds = np.asarray(donor_preds, dtype=float).ravel()
    if donors.ndim != 2 or donors.shape[1] != cov.dimension:
        raise ValueError(f"donors must be n-by-{cov.dimension}, got shape {donors.shape}")
    if donor_preds.shape[0] != donors.shape[0]:
        raise ValueError(
            f"{donors.shape[0]} donors but {donor_preds.shape[0]} donor predictions"
        )
    pd = np.abs(donor_preds - float(target_pred))
    md = mahalanobis_to_pool(target, donors, cov)
    return np.column_stack([np.arange(donors.shape[0], dtype=float), pd, md])


def write_distance_table(table, path):
    """Write (index, pd, md) rows as CSV with the exact ``index,pd,md`` header."""
    table = np.asarray(table, dtype=float)
    if table.ndim != 2 or table.shape[1] != 3:
        raise ValueError(f"expected an n-by-3 table, got shape {table.shape}")
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(DISTANCE_TABLE_HEADER)
            for idx, pd, md in table:
                writer.writerow([int(idx), repr(float(pd)), repr(float(md))])
    except OSError as exc:
        raise OSError(f"writing distance table to {path}: {exc}") from exc
