"""Synthetic populations, outcomes, and missingness mechanisms.

Predictors are drawn from a trivariate normal with mean (10, 10, 10) and
unit variances; the off-diagonal correlation and an optional strong
right-skew transform (x^12 / max(x^11), column-wise) vary across study
conditions.  The outcome is the plain row sum plus N(0, 7^2) noise.

Missingness only ever hits the outcome.  ``mcar`` deletes each value
independently with the target probability; ``mar_right`` deletes with a
right-tailed logistic probability of the standardized predictor sum,
calibrated by bisection so the mean deletion probability equals the
target, which shifts the observed outcome distribution to the left.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .imputation import Dataset

MCAR = "mcar"
MAR_RIGHT = "mar_right"
MECHANISMS = (MCAR, MAR_RIGHT)

DEFAULT_MEAN = (10.0, 10.0, 10.0)
DEFAULT_NOISE_SD = 7.0

#: Calibration tolerance for the mean mar_right deletion probability.
MAR_CALIBRATION_TOL = 1e-6


@dataclass(frozen=True)
class GenConfig:
    """Population recipe: size, predictor correlation, skewness, noise scale."""

    n: int
    rho: float = 0.0
    skewed: bool = False
    mu: tuple = DEFAULT_MEAN
    sigma_eps: float = DEFAULT_NOISE_SD
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be at least 1, got {self.n}")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if self.sigma_eps <= 0.0:
            raise ValueError(f"sigma_eps must be positive, got {self.sigma_eps}")


@dataclass(frozen=True)
class MissingnessConfig:
    """Deletion recipe: mechanism and target proportion."""

    mechanism: str
    proportion: float
    seed: int = 0

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"mechanism must be one of {MECHANISMS}, got {self.mechanism!r}")
        if not 0.0 < self.proportion < 1.0:
            raise ValueError(f"proportion must lie in (0, 1), got {self.proportion}")


def gen_predictors(config: GenConfig, rng=None) -> np.ndarray:
    """Draw the predictor matrix, optionally pushed through the skew transform."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    mu = np.asarray(config.mu, dtype=float)
    p = mu.shape[0]
    sigma = np.full((p, p), config.rho, dtype=float)
    np.fill_diagonal(sigma, 1.0)
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"correlation {config.rho} gives a non-PD covariance") from exc
    x = mu + rng.standard_normal((config.n, p)) @ chol.T
    if config.skewed:
        x = skew_transform(x)
    return x


def skew_transform(x) -> np.ndarray:
    """Column-wise x^12 / max(x^11); strongly right-skews positive columns.

    The column maximum is preserved exactly.  Negative inputs (vanishingly
    rare under the mean-10, unit-variance regime) are still transformed as
    written, with a diagnostic warning since x^12 drops their sign.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        warnings.warn(
            "skew transform applied to non-positive values; x^12 is sign-blind",
            RuntimeWarning,
            stacklevel=2,
        )
    return x**12 / np.max(x**11, axis=0, keepdims=True)


def gen_outcome(x, sigma_eps: float, rng) -> np.ndarray:
    """Row sum of the three predictors plus N(0, sigma_eps^2) noise."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != 3:
        raise ValueError(f"outcome model expects exactly 3 predictors, got shape {x.shape}")
    return x.sum(axis=1) + sigma_eps * rng.standard_normal(x.shape[0])


def mar_right_probabilities(x, proportion: float, tol: float = MAR_CALIBRATION_TOL) -> np.ndarray:
    """Right-tailed logistic deletion probabilities with calibrated mean.

    Probabilities are expit(z - c) of the standardized predictor sum z; the
    intercept c is found by bisection so that the mean probability matches
    ``proportion`` within ``tol``.  Constant predictor sums degenerate to a
    flat probability, i.e. to mcar.
    """
    score = np.asarray(x, dtype=float).sum(axis=1)
    sd = float(score.std(ddof=1)) if score.shape[0] > 1 else 0.0
    if sd > 0.0:
        z = (score - score.mean()) / sd
    else:
        z = np.zeros(score.shape[0])
    lo, hi = -60.0, 60.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        mean_prob = float(expit(z - mid).mean())
        if abs(mean_prob - proportion) <= tol:
            return expit(z - mid)
        if mean_prob > proportion:
            lo = mid
        else:
            hi = mid
    raise RuntimeError("mar_right calibration did not converge")


def ampute(y, x, config: MissingnessConfig, rng=None) -> np.ndarray:
    """Boolean deletion mask for the outcome (True = missing).

    Missingness never depends on y itself: mcar is pure coin flips, mar_right
    depends on the (always observed) predictors only.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n = np.asarray(y).shape[0]
    if config.mechanism == MCAR:
        probs = np.full(n, config.proportion)
    else:
        x = np.asarray(x, dtype=float)
        if x.shape[0] != n:
            raise ValueError(f"{n} outcomes but {x.shape[0]} predictor rows")
        probs = mar_right_probabilities(x, config.proportion)
    return rng.random(n) < probs


def make_study2_case(data: Dataset, rng) -> tuple[Dataset, float]:
    """Mask the outcome of one uniformly chosen row; return the masked truth."""
    if data.n_missing > 0:
        raise ValueError("input data must be fully observed")
    if data.n < 1:
        raise ValueError("cannot mask a row of an empty data set")
    row = int(rng.integers(0, data.n))
    truth = float(data.y[row])
    mask = np.zeros(data.n, dtype=bool)
    mask[row] = True
    return Dataset.from_full(data.x, data.y, mask), truth


def dataset_to_csv(x, y, mask, path):
    """Persist a generated sample as ``x1,x2,x3,y,mask`` (mask 1 = missing)."""
    import csv

    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if x.ndim != 2 or x.shape[1] != 3:
        raise ValueError(f"expected 3 predictor columns, got shape {x.shape}")
    if y.shape[0] != x.shape[0] or mask.shape[0] != x.shape[0]:
        raise ValueError("column lengths differ")
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x1", "x2", "x3", "y", "mask"])
            for i in range(x.shape[0]):
                writer.writerow(
                    [repr(float(v)) for v in x[i]] + [repr(float(y[i])), int(mask[i])]
                )
    except OSError as exc:
        raise OSError(f"writing data set to {path}: {exc}") from exc
