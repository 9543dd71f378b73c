"""Hot-deck multiple imputation of a partially missing outcome.

Each imputation fits the outcome model on the observed rows, perturbs the
parameters with a posterior draw, matches every missing row to its k best
donors under the requested distance family, and copies the observed
outcome of one donor picked uniformly from the k.  Donors are predicted
with the least-squares coefficients and targets with the drawn
coefficients (type-1 matching; type-0 predicts both sides with the
least-squares coefficients and is available for sensitivity runs).

Pooling follows Rubin's rules.  ``mode="standard"`` combines the within-
and between-imputation variances with the Barnard-Rubin small-sample
degrees of freedom; ``mode="finite_population"`` treats the complete
sample as the population, so the within term is zero, the total variance
is (1 + 1/m) * b, and the reference distribution is t with m - 1 degrees
of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import t as student_t

from .distances import (
    PMM,
    RANKED,
    BlendSpec,
    blend_ranked_rows,
    blend_scaled_rows,
    covariance_estimate,
    pairwise_mahalanobis,
    select_rows,
)
from .regression import ols_fit, bayes_draw, predict

TYPE1 = "type1"
TYPE0 = "type0"

STANDARD = "standard"
FINITE_POPULATION = "finite_population"
POOLING_MODES = (STANDARD, FINITE_POPULATION)


def rng_stream(*key) -> np.random.Generator:
    """Independent generator keyed by non-negative integers.

    Streams keyed by distinct tuples are statistically independent and do not
    depend on scheduling, which is what makes parallel runs reproducible.
    """
    flat = []
    for part in key:
        if isinstance(part, (tuple, list)):
            flat.extend(int(v) for v in part)
        else:
            flat.append(int(part))
    if any(v < 0 for v in flat):
        raise ValueError(f"stream keys must be non-negative integers, got {flat}")
    return np.random.default_rng(flat)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Fully observed predictors, an outcome with gaps, and the missingness mask.

    ``y`` holds NaN wherever ``mask`` is True (True = missing).  Predictors
    are never missing.
    """

    x: np.ndarray
    y: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if x.ndim != 2:
            raise ValueError(f"predictors must be an n-by-p matrix, got shape {x.shape}")
        n = x.shape[0]
        if y.shape != (n,) or mask.shape != (n,):
            raise ValueError(
                f"outcome and mask must have length {n}, got {y.shape} and {mask.shape}"
            )
        if not np.all(np.isfinite(x)):
            raise ValueError("predictors contain missing or non-finite values")
        if np.any(np.isnan(y[~mask])):
            raise ValueError("observed outcomes contain NaN")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def complete(cls, x, y):
        y = np.asarray(y, dtype=float)
        return cls(x=x, y=y, mask=np.zeros(y.shape[0], dtype=bool))

    @classmethod
    def from_full(cls, x, y_full, mask):
        """Blank the masked entries of a fully known outcome."""
        y = np.asarray(y_full, dtype=float).copy()
        mask = np.asarray(mask, dtype=bool)
        y[mask] = np.nan
        return cls(x=x, y=y, mask=mask)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def n_predictors(self) -> int:
        return self.x.shape[1]

    @property
    def n_observed(self) -> int:
        return int((~self.mask).sum())

    @property
    def n_missing(self) -> int:
        return int(self.mask.sum())

    def validate_for_imputation(self, k: int = 1):
        need = self.n_predictors + 2
        if self.n_observed < need:
            raise ValueError(
                f"imputation needs at least {need} observed rows, got {self.n_observed}"
            )
        if self.n_missing < 1:
            raise ValueError("nothing to impute: no missing outcomes")
        if k > self.n_observed:
            raise ValueError(f"fewer than k={k} donors available ({self.n_observed} observed)")


@dataclass(frozen=True, eq=False)
class ImputationResult:
    """m completed versions of the outcome vector."""

    completed: np.ndarray  # shape (m, n)
    m: int
    spec: BlendSpec
    seed: object
    mask: np.ndarray  # True where the value was imputed


@dataclass(frozen=True)
class PooledEstimate:
    """Rubin-pooled point estimate for the outcome mean."""

    qbar: float
    b: float
    ubar: float
    t_var: float
    df: float
    ci_lower: float
    ci_upper: float
    m: int


@dataclass(frozen=True)
class SingleValueEstimate:
    """Pooled summary of the m imputed values of one cell."""

    estimate: float
    ssd: float
    se: float
    ci_lower: float
    ci_upper: float
    m: int


def impute_once(
    data: Dataset,
    spec: BlendSpec,
    rng,
    *,
    fit=None,
    cov=None,
    md_rows=None,
    matching: str = TYPE1,
    capture: dict | None = None,
) -> np.ndarray:
    """One completed outcome vector.

    ``fit``, ``cov`` and ``md_rows`` accept precomputed pieces (the
    least-squares fit on the observed rows, the covariance of *all* predictor
    rows, and the missing-by-observed Mahalanobis matrix); they are purely a
    speed device for simulation loops and do not change the result.  When
    ``capture`` is a dict it receives the matched candidate sets.
    """
    if matching not in (TYPE1, TYPE0):
        raise ValueError(f"matching must be {TYPE1!r} or {TYPE0!r}, got {matching!r}")
    data.validate_for_imputation(spec.k)
    obs = ~data.mask
    mis = data.mask
    x_obs = data.x[obs]
    y_obs = data.y[obs]
    x_mis = data.x[mis]
    if fit is None:
        fit = ols_fit(x_obs, y_obs)
    draw = bayes_draw(fit, rng)
    donor_preds = predict(fit.coefs, x_obs)
    target_coefs = draw.coefs if matching == TYPE1 else fit.coefs
    target_preds = predict(target_coefs, x_mis)
    pd_rows = np.abs(target_preds[:, None] - donor_preds[None, :])
    if spec.family == PMM:
        dist_rows = pd_rows
    else:
        if md_rows is None:
            if cov is None:
                cov = covariance_estimate(data.x)
            md_rows = pairwise_mahalanobis(x_mis, x_obs, cov)
        else:
            md_rows = np.asarray(md_rows, dtype=float)
            if md_rows.shape != pd_rows.shape:
                raise ValueError(
                    f"md_rows has shape {md_rows.shape}, expected {pd_rows.shape}"
                )
        if spec.family == RANKED:
            dist_rows = blend_ranked_rows(pd_rows, md_rows, spec.blend, rng)
        else:
            dist_rows = blend_scaled_rows(pd_rows, md_rows, spec.blend)
    candidates = select_rows(dist_rows, spec.k, rng)
    pick = rng.integers(0, spec.k, size=x_mis.shape[0])
    donor_rows = candidates[np.arange(x_mis.shape[0]), pick]
    completed = data.y.copy()
    completed[mis] = y_obs[donor_rows]
    if capture is not None:
        obs_index = np.flatnonzero(obs)
        capture["missing_rows"] = np.flatnonzero(mis)
        capture["candidates"] = obs_index[candidates]
        capture["donors"] = obs_index[donor_rows]
    return completed


def multiple_impute(
    data: Dataset,
    spec: BlendSpec,
    m: int,
    seed,
    *,
    matching: str = TYPE1,
    fit=None,
    cov=None,
    md_rows=None,
) -> ImputationResult:
    """m independent imputations with per-imputation substreams of ``seed``.

    Imputation j uses the generator keyed by (*seed, j), so the result is
    identical however the imputations are scheduled.
    """
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    data.validate_for_imputation(spec.k)
    obs = ~data.mask
    if fit is None:
        fit = ols_fit(data.x[obs], data.y[obs])
    if spec.family != PMM and md_rows is None:
        if cov is None:
            cov = covariance_estimate(data.x)
        md_rows = pairwise_mahalanobis(data.x[data.mask], data.x[obs], cov)
    completed = np.empty((m, data.n), dtype=float)
    for j in range(m):
        completed[j] = impute_once(
            data,
            spec,
            rng_stream(seed, j),
            fit=fit,
            cov=cov,
            md_rows=md_rows,
            matching=matching,
        )
    return ImputationResult(completed=completed, m=m, spec=spec, seed=seed, mask=data.mask.copy())


def rubin_combine(estimates, within=None, mode: str = STANDARD, nu_com: float | None = None) -> PooledEstimate:
    """Pool m point estimates (optionally with their within variances).

    standard:           t_var = ubar + (1 + 1/m) b, Barnard-Rubin df.
    finite_population:  t_var = (1 + 1/m) b, df = m - 1 (the sample is the
                        population, so there is no sampling variance term).
    """
    q = np.asarray(estimates, dtype=float).ravel()
    m = q.shape[0]
    if m < 2:
        raise ValueError(f"pooling needs at least 2 estimates, got {m}")
    if mode not in POOLING_MODES:
        raise ValueError(f"mode must be one of {POOLING_MODES}, got {mode!r}")
    qbar = float(q.mean())
    b = float(q.var(ddof=1))
    if mode == FINITE_POPULATION:
        ubar = 0.0
        t_var = (1.0 + 1.0 / m) * b
        df = float(m - 1)
    else:
        if within is None:
            raise ValueError("standard pooling needs the within-imputation variances")
        w = np.asarray(within, dtype=float).ravel()
        if w.shape[0] != m or np.any(w < 0):
            raise ValueError("within variances must be m non-negative values")
        ubar = float(w.mean())
        t_var = ubar + (1.0 + 1.0 / m) * b
        df = _barnard_rubin_df(m, b, t_var, nu_com)
    half = float(student_t.ppf(0.975, df)) * np.sqrt(t_var) if t_var > 0.0 else 0.0
    return PooledEstimate(
        qbar=qbar,
        b=b,
        ubar=ubar,
        t_var=t_var,
        df=df,
        ci_lower=qbar - half,
        ci_upper=qbar + half,
        m=m,
    )


def _barnard_rubin_df(m, b, t_var, nu_com):
    if nu_com is None:
        raise ValueError("standard pooling needs the complete-data degrees of freedom")
    lam = (1.0 + 1.0 / m) * b / t_var if t_var > 0.0 else 0.0
    nu_obs = (nu_com + 1.0) / (nu_com + 3.0) * nu_com * (1.0 - lam)
    if lam <= 0.0:
        return max(nu_obs, 1.0)
    nu_old = (m - 1.0) / lam**2
    if nu_old + nu_obs <= 0.0:
        return 1.0
    return max(nu_old * nu_obs / (nu_old + nu_obs), 1.0)


def pool_mean(result: ImputationResult, n: int | None = None, mode: str = STANDARD) -> PooledEstimate:
    """Pool the per-imputation means of the completed outcome.

    ``n`` is the sample size used for the within variance s^2/n of each
    completed data set; it defaults to the outcome length.
    """
    comp = np.asarray(result.completed, dtype=float)
    m, width = comp.shape
    if n is None:
        n = width
    q = comp.mean(axis=1)
    within = comp.var(axis=1, ddof=1) / n
    return rubin_combine(q, within=within, mode=mode, nu_com=n - 1)


def pool_single_value(result: ImputationResult, row: int) -> SingleValueEstimate:
    """Pool the m imputed values of one missing cell.

    estimate = mean of the m values, ssd = sum of squared deviations around
    it, se = sqrt((1 + 1/m) ssd / (m - 1)), CI from t with m - 1 degrees of
    freedom.  (The (1 + 1/m) factor inflates the spread of the imputations
    for the finite number of draws; for a single cell there is no
    within-imputation sampling term.)
    """
    if not result.mask[row]:
        raise ValueError(f"row {row} was observed, not imputed")
    m = result.m
    if m < 2:
        raise ValueError(f"single-value pooling needs at least 2 imputations, got {m}")
    values = np.asarray(result.completed, dtype=float)[:, row]
    estimate = float(values.mean())
    ssd = float(((values - estimate) ** 2).sum())
    se = float(np.sqrt((1.0 + 1.0 / m) * ssd / (m - 1)))
    half = float(student_t.ppf(0.975, m - 1)) * se
    return SingleValueEstimate(
        estimate=estimate,
        ssd=ssd,
        se=se,
        ci_lower=estimate - half,
        ci_upper=estimate + half,
        m=m,
    )


def result_to_csv(result: ImputationResult, path):
    """Serialize an imputation result: row, observed, then one column per imputation."""
    import csv

    comp = np.asarray(result.completed, dtype=float)
    m, n = comp.shape
    header = ["row", "observed"] + [f"imp_{j + 1}" for j in range(m)]
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(n):
                observed = "" if result.mask[i] else repr(float(comp[0, i]))
                writer.writerow([i, observed] + [repr(float(comp[j, i])) for j in range(m)])
    except OSError as exc:
        raise OSError(f"writing imputations to {path}: {exc}") from exc
