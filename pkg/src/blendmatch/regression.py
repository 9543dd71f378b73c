"""Least-squares fitting and the posterior parameter draw behind proper imputation.

``ols_fit`` estimates the linear prediction model on complete cases;
``bayes_draw`` perturbs it with the standard noninformative-prior draw
(sigma^2 from a scaled inverse chi-square, coefficients from a normal
around the least-squares solution) so that each imputation uses its own
plausible parameter vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Relative ridge added to the design cross-product before inversion when needed.
XTX_RIDGE = 1e-5


@dataclass(frozen=True, eq=False)
class OlsFit:
    """Least-squares fit with the pieces needed for a posterior draw.

    ``coefs`` holds the intercept first.  ``xtx_inv`` is the (ridge-stabilized
    when necessary) inverse of the design cross-product [1 X]'[1 X].
    """

    coefs: np.ndarray
    xtx_inv: np.ndarray
    sse: float
    n_obs: int
    n_params: int


@dataclass(frozen=True, eq=False)
class DrawnModel:
    """One posterior parameter draw: coefficients and residual scale."""

    coefs: np.ndarray
    sigma: float
    fit: OlsFit


def add_intercept(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"predictors must be an n-by-p matrix, got shape {x.shape}")
    return np.column_stack([np.ones(x.shape[0]), x])


def ols_fit(x, y, ridge: float = XTX_RIDGE) -> OlsFit:
    """Fit y on [1 X] by least squares.

    Requires strictly more rows than parameters (the chi-square draw in
    ``bayes_draw`` needs positive degrees of freedom).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if x.ndim != 2:
        raise ValueError(f"predictors must be an n-by-p matrix, got shape {x.shape}")
    n, p = x.shape
    q = p + 1
    if y.shape[0] != n:
        raise ValueError(f"{n} predictor rows but {y.shape[0]} outcomes")
    if n <= q:
        raise ValueError(f"need more than {q} rows to fit {q} parameters, got {n}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("fit inputs contain non-finite values")
    design = add_intercept(x)
    coefs, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coefs
    sse = float(resid @ resid)
    xtx = design.T @ design
    xtx_inv = _stabilized_inverse(xtx, ridge)
    return OlsFit(coefs=coefs, xtx_inv=xtx_inv, sse=sse, n_obs=n, n_params=q)


def _stabilized_inverse(xtx, ridge):
    inv = _symmetric_inverse(xtx)
    if inv is None:
        scale = float(np.mean(np.diag(xtx)))
        inv = _symmetric_inverse(xtx + ridge * scale * np.eye(xtx.shape[0]))
        if inv is None:
            raise ValueError("design matrix is rank deficient beyond ridge repair")
    return inv


def _symmetric_inverse(matrix):
    q = matrix.shape[0]
    try:
        inv = np.linalg.inv(matrix)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(inv)):
        return None
    inv = (inv + inv.T) / 2.0
    if not np.allclose(inv @ matrix, np.eye(q), atol=1e-8):
        return None
    return inv


def bayes_draw(fit: OlsFit, rng) -> DrawnModel:
    """Draw (coefs, sigma) from the posterior implied by a least-squares fit.

    sigma^2 = sse / g with g ~ chi-square(n_obs - n_params), and
    coefs = fit.coefs + sigma * L z with L the lower Cholesky factor of
    xtx_inv and z standard normal.  A zero-residual fit degenerates cleanly
    to sigma = 0, coefs = fit.coefs.
    """
    dof = fit.n_obs - fit.n_params
    if dof <= 0:
        raise ValueError(f"posterior draw needs n_obs > n_params, got {fit.n_obs} <= {fit.n_params}")
    g = rng.chisquare(dof)
    sigma = math.sqrt(fit.sse / g) if fit.sse > 0.0 else 0.0
    z = rng.standard_normal(fit.n_params)
    coefs = fit.coefs + sigma * (np.linalg.cholesky(fit.xtx_inv) @ z)
    return DrawnModel(coefs=coefs, sigma=sigma, fit=fit)


def predict(coefs, x) -> np.ndarray:
    """Predictions [1 X] @ coefs for an m-by-p predictor matrix."""
    coefs = np.asarray(coefs, dtype=float).ravel()
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"predictors must be an m-by-p matrix, got shape {x.shape}")
    if x.shape[1] + 1 != coefs.shape[0]:
        raise ValueError(
            f"{coefs.shape[0]} coefficients do not match {x.shape[1]} predictors plus intercept"
        )
    return add_intercept(x) @ coefs
