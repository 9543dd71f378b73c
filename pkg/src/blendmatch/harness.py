"""Monte-Carlo harness for the two donor-matching simulation studies.

Study 1 sweeps a full factorial of data-generating conditions
(mechanism x proportion x distribution x correlation = 24) against seven
matching methods.  Per condition one complete sample of size n is fixed
and its mean of y is the estimand; each of the nsim replicates re-amputes
that sample, imputes it m_per_sim times, and contributes one pooled point
estimate plus a pooled confidence interval.  Replicate estimates are then
combined across the nsim replicates in finite-population mode (the fixed
sample is the population), which yields the qbar/se/t/df/b columns of the
study-1 tables; coverage is the fraction of per-replicate intervals that
contain the estimand.

Study 2 imputes a single masked value of a fresh skewed, rho = 0.7 sample
per replicate, 50 times per method, for the plain predictive match and
eleven rank-blend weights, and aggregates accuracy (bias, RMSE),
precision (SE) and validity (coverage) over replicates.

Randomness is organized as independent streams keyed by
(seed, purpose, condition, method, replicate, imputation), so results are
bitwise identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .datagen import (
    MECHANISMS,
    GenConfig,
    MissingnessConfig,
    ampute,
    gen_outcome,
    gen_predictors,
    make_study2_case,
)
from .distances import PMM, RANKED, SCALED, BlendSpec, covariance_estimate, pairwise_mahalanobis
from .imputation import (
    FINITE_POPULATION,
    POOLING_MODES,
    STANDARD,
    Dataset,
    multiple_impute,
    pool_mean,
    pool_single_value,
    rng_stream,
    rubin_combine,
)
from .regression import add_intercept, ols_fit

DEFAULT_SEED = 1234

DEFAULT_DONORS = 5

#: The seven study-1 methods in canonical (table) order.
STUDY1_METHODS = (
    BlendSpec(PMM, 1.0, DEFAULT_DONORS),
    BlendSpec(RANKED, 1.0, DEFAULT_DONORS),
    BlendSpec(RANKED, 0.5, DEFAULT_DONORS),
    BlendSpec(RANKED, 0.0, DEFAULT_DONORS),
    BlendSpec(SCALED, 1.0, DEFAULT_DONORS),
    BlendSpec(SCALED, 0.5, DEFAULT_DONORS),
    BlendSpec(SCALED, 0.0, DEFAULT_DONORS),
)

#: Study-2 rank-blend weights, heaviest predictive weight first.
STUDY2_BLENDS = (1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0)

# Stream purpose tags; any two distinct uses must differ in tag.
_TAG_POPULATION = 1
_TAG_AMPUTE = 2
_TAG_IMPUTE = 3
_TAG_S2_DATA = 11
_TAG_S2_CASE = 12
_TAG_S2_IMPUTE = 13


@dataclass(frozen=True)
class Condition:
    """One data-generating condition of study 1."""

    mechanism: str
    proportion: float
    skewed: bool
    rho: float

    @property
    def mis(self) -> str:
        return f"{self.proportion * 100:g}%"

    @property
    def dist(self) -> str:
        return "skewed" if self.skewed else "normal"

    @property
    def cor(self) -> str:
        return f"{self.rho:g}"

    @property
    def label(self) -> str:
        return f"{self.mechanism}_{self.mis}_{self.dist}_{self.cor}"


@dataclass(frozen=True)
class ConditionGrid:
    """Factorial design: conditions x methods."""

    mechanisms: tuple = MECHANISMS
    proportions: tuple = (0.25, 0.5)
    distributions: tuple = ("normal", "skewed")
    correlations: tuple = (0.0, 0.1, 0.7)
    methods: tuple = STUDY1_METHODS

    def __post_init__(self):
        for mech in self.mechanisms:
            if mech not in MECHANISMS:
                raise ValueError(f"unknown mechanism {mech!r}")
        for dist in self.distributions:
            if dist not in ("normal", "skewed"):
                raise ValueError(f"unknown distribution {dist!r}")
        for prop in self.proportions:
            if not 0.0 < prop < 1.0:
                raise ValueError(f"proportion {prop} outside (0, 1)")
        for rho in self.correlations:
            if not 0.0 <= rho < 1.0:
                raise ValueError(f"correlation {rho} outside [0, 1)")
        if not self.methods:
            raise ValueError("grid needs at least one method")

    def conditions(self) -> list[Condition]:
        return [
            Condition(mech, prop, dist == "skewed", rho)
            for mech in self.mechanisms
            for prop in self.proportions
            for dist in self.distributions
            for rho in self.correlations
        ]

    @property
    def n_cells(self) -> int:
        return len(self.conditions()) * len(self.methods)


@dataclass(frozen=True)
class Study1Row:
    """One cell of the study-1 result tables.

    ``se`` is the square root of the finite-population total variance of the
    across-replicate combine, ``t`` that total variance itself, ``b`` the
    between-replicate variance; ``cov`` is the fraction of per-replicate
    intervals covering the fixed-sample truth.
    """

    mech: str
    mis: str
    dist: str
    cor: str
    method: str
    qbar: float
    se: float
    t: float
    df: float
    b: float
    ci_lower: float
    ci_upper: float
    true: float
    cov: float
    bias: float
    r2: float


@dataclass(frozen=True)
class PoolingModeRow:
    """Across-replicate pooled columns for one cell under one pooling mode."""

    mech: str
    mis: str
    dist: str
    cor: str
    method: str
    mode: str
    qbar: float
    se: float
    t: float
    df: float
    b: float
    ci_lower: float
    ci_upper: float
    cov: float


@dataclass(frozen=True)
class Study2Row:
    """Aggregated study-2 performance for one method."""

    method: str
    blend: Optional[float]
    estimate: float
    true: float
    bias: float
    absbias: float
    ssd: float
    se: float
    ci_lower: float
    ci_upper: float
    cov: float
    rmse: float


@dataclass(frozen=True)
class Study1Result:
    rows: list
    pooling_rows: list
    failures: list


@dataclass(frozen=True)
class Study2Result:
    rows: list
    failures: list


def metric_bias(qbar: float, true: float) -> float:
    """Signed estimation error."""
    return float(qbar) - float(true)


def metric_rmse(estimates, truths) -> float:
    """Root mean squared error of paired estimates against truths."""
    estimates = np.asarray(estimates, dtype=float).ravel()
    truths = np.asarray(truths, dtype=float).ravel()
    if estimates.size == 0:
        raise ValueError("rmse of an empty sequence")
    if estimates.shape != truths.shape:
        raise ValueError(f"length mismatch: {estimates.shape} vs {truths.shape}")
    return float(np.sqrt(np.mean((estimates - truths) ** 2)))


def metric_coverage(flags) -> float:
    """Fraction of confidence intervals that captured the truth."""
    flags = np.asarray(flags, dtype=float).ravel()
    if flags.size == 0:
        raise ValueError("coverage of an empty sequence")
    return float(flags.mean())


def metric_r2(data: Dataset) -> float:
    """OLS R-squared of the completed outcome on the predictors (with intercept)."""
    import warnings

    if data.n_missing > 0:
        raise ValueError("R-squared needs a completed data set without missing values")
    design = add_intercept(data.x)
    coefs, *_ = np.linalg.lstsq(design, data.y, rcond=None)
    resid = data.y - design @ coefs
    rss = float(resid @ resid)
    tss = float(((data.y - data.y.mean()) ** 2).sum())
    if tss <= 0.0:
        warnings.warn("outcome variance is degenerate; returning R-squared 0", RuntimeWarning)
        return 0.0
    return 1.0 - rss / tss


def _r2_rows(q_ortho, y_rows) -> np.ndarray:
    """R-squared per completed outcome row, via the orthonormal design basis.

    Same quantity as ``metric_r2`` (asserted by tests); this path avoids one
    least-squares solve per imputation inside the simulation loops.
    """
    proj = y_rows @ q_ortho
    total = np.einsum("ij,ij->i", y_rows, y_rows)
    rss = total - np.einsum("ij,ij->i", proj, proj)
    centered = y_rows - y_rows.mean(axis=1, keepdims=True)
    tss = np.einsum("ij,ij->i", centered, centered)
    safe = tss > 0.0
    return np.where(safe, 1.0 - rss / np.where(safe, tss, 1.0), 0.0)


@dataclass(frozen=True)
class _CellSummary:
    cond_idx: int
    meth_idx: int
    truth: float
    combined: dict
    cov: dict
    r2: float


def _study1_cell(args):
    """Run one (condition, method) cell; returns (idx, summary | None, error | None)."""
    condition, spec, cond_idx, meth_idx, n, nsim, m_per_sim, seed = args
    try:
        pop_rng = rng_stream(seed, _TAG_POPULATION, cond_idx)
        gen = GenConfig(n=n, rho=condition.rho, skewed=condition.skewed)
        x = gen_predictors(gen, pop_rng)
        y = gen_outcome(x, gen.sigma_eps, pop_rng)
        truth = float(y.mean())
        miss = MissingnessConfig(condition.mechanism, condition.proportion)
        cov = md_full = None
        if spec.family != PMM:
            cov = covariance_estimate(x)
            md_full = pairwise_mahalanobis(x, x, cov)
        q_ortho, _ = np.linalg.qr(add_intercept(x))
        estimates = np.empty(nsim)
        ubars = np.empty(nsim)
        covered = {mode: 0 for mode in POOLING_MODES}
        r2_total = 0.0
        for rep in range(nsim):
            mask = ampute(y, x, miss, rng_stream(seed, _TAG_AMPUTE, cond_idx, rep))
            data = Dataset.from_full(x, y, mask)
            obs = ~mask
            fit = ols_fit(x[obs], y[obs])
            md_rows = md_full[np.ix_(mask, obs)] if md_full is not None else None
            result = multiple_impute(
                data,
                spec,
                m_per_sim,
                (seed, _TAG_IMPUTE, cond_idx, meth_idx, rep),
                fit=fit,
                cov=cov,
                md_rows=md_rows,
            )
            per_mode = {mode: pool_mean(result, n=n, mode=mode) for mode in POOLING_MODES}
            for mode in POOLING_MODES:
                if per_mode[mode].ci_lower <= truth <= per_mode[mode].ci_upper:
                    covered[mode] += 1
            estimates[rep] = per_mode[STANDARD].qbar
            ubars[rep] = per_mode[STANDARD].ubar
            r2_total += float(_r2_rows(q_ortho, result.completed).mean())
        combined = {
            FINITE_POPULATION: rubin_combine(estimates, mode=FINITE_POPULATION),
            STANDARD: rubin_combine(estimates, within=ubars, mode=STANDARD, nu_com=n - 1),
        }
        summary = _CellSummary(
            cond_idx=cond_idx,
            meth_idx=meth_idx,
            truth=truth,
            combined=combined,
            cov={mode: covered[mode] / nsim for mode in POOLING_MODES},
            r2=r2_total / nsim,
        )
        return cond_idx, meth_idx, summary, None
    except Exception as exc:  # cell failures are reported, never fatal
        return cond_idx, meth_idx, None, f"{type(exc).__name__}: {exc}"


def _run_units(worker, payloads, threads):
    if threads <= 1:
        return [worker(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(worker, p) for p in payloads]
        return [f.result() for f in futures]


def run_study1(
    grid: ConditionGrid | None = None,
    n: int = 500,
    nsim: int = 1000,
    m_per_sim: int = 5,
    seed: int = DEFAULT_SEED,
    threads: int = 1,
    ci_mode: str = FINITE_POPULATION,
    progress=None,
) -> Study1Result:
    """Full condition-by-method sweep of study 1.

    ``ci_mode`` picks which per-replicate interval feeds the coverage column
    (finite-population by default); both modes are always computed and
    reported side by side in the pooling rows.
    """
    if grid is None:
        grid = ConditionGrid()
    if nsim < 2:
        raise ValueError(f"study 1 needs nsim >= 2, got {nsim}")
    if m_per_sim < 2:
        raise ValueError(f"study 1 needs m_per_sim >= 2, got {m_per_sim}")
    if ci_mode not in POOLING_MODES:
        raise ValueError(f"ci_mode must be one of {POOLING_MODES}")
    conditions = grid.conditions()
    payloads = [
        (condition, spec, cond_idx, meth_idx, n, nsim, m_per_sim, seed)
        for meth_idx, spec in enumerate(grid.methods)
        for cond_idx, condition in enumerate(conditions)
    ]
    rows: list[Study1Row] = []
    pooling_rows: list[PoolingModeRow] = []
    failures: list[str] = []
    done = 0
    for cond_idx, meth_idx, summary, error in _run_units(_study1_cell, payloads, threads):
        condition = conditions[cond_idx]
        spec = grid.methods[meth_idx]
        done += 1
        if progress is not None:
            progress(done, len(payloads), condition, spec)
        if error is not None:
            failures.append(f"{condition.label}/{spec.label}: {error}")
            continue
        main = summary.combined[FINITE_POPULATION]
        rows.append(
            Study1Row(
                mech=condition.mechanism,
                mis=condition.mis,
                dist=condition.dist,
                cor=condition.cor,
                method=spec.label,
                qbar=main.qbar,
                se=math.sqrt(main.t_var),
                t=main.t_var,
                df=main.df,
                b=main.b,
                ci_lower=main.ci_lower,
                ci_upper=main.ci_upper,
                true=summary.truth,
                cov=summary.cov[ci_mode],
                bias=metric_bias(main.qbar, summary.truth),
                r2=summary.r2,
            )
        )
        for mode in POOLING_MODES:
            pooled = summary.combined[mode]
            pooling_rows.append(
                PoolingModeRow(
                    mech=condition.mechanism,
                    mis=condition.mis,
                    dist=condition.dist,
                    cor=condition.cor,
                    method=spec.label,
                    mode=mode,
                    qbar=pooled.qbar,
                    se=math.sqrt(pooled.t_var),
                    t=pooled.t_var,
                    df=pooled.df,
                    b=pooled.b,
                    ci_lower=pooled.ci_lower,
                    ci_upper=pooled.ci_upper,
                    cov=summary.cov[mode],
                )
            )
    return Study1Result(rows=rows, pooling_rows=pooling_rows, failures=failures)


def study2_methods(k: int = DEFAULT_DONORS) -> tuple:
    """Plain predictive matching plus the eleven rank-blend weights."""
    return (BlendSpec(PMM, 1.0, k),) + tuple(BlendSpec(RANKED, b, k) for b in STUDY2_BLENDS)


# Column layout of the per-replicate study-2 records.
_S2_COLUMNS = (
    "estimate",
    "true",
    "bias",
    "absbias",
    "ssd",
    "se",
    "ci_lower",
    "ci_upper",
    "cov",
    "sq_bias",
)


def _study2_chunk(args):
    """Run a chunk of study-2 replicates; returns (start, records, failures)."""
    start, count, n, m, seed, specs = args
    records = np.full((count, len(specs), len(_S2_COLUMNS)), np.nan)
    failures = []
    gen = GenConfig(n=n, rho=0.7, skewed=True)
    for i in range(count):
        rep = start + i
        try:
            data_rng = rng_stream(seed, _TAG_S2_DATA, rep)
            x = gen_predictors(gen, data_rng)
            y = gen_outcome(x, gen.sigma_eps, data_rng)
            data, truth = make_study2_case(
                Dataset.complete(x, y), rng_stream(seed, _TAG_S2_CASE, rep)
            )
            row = int(np.flatnonzero(data.mask)[0])
            obs = ~data.mask
            fit = ols_fit(x[obs], y[obs])
            cov = covariance_estimate(x)
            md_row = pairwise_mahalanobis(x[data.mask], x[obs], cov)
            for mi, spec in enumerate(specs):
                result = multiple_impute(
                    data,
                    spec,
                    m,
                    (seed, _TAG_S2_IMPUTE, mi, rep),
                    fit=fit,
                    md_rows=md_row if spec.family != PMM else None,
                )
                sv = pool_single_value(result, row)
                bias = metric_bias(sv.estimate, truth)
                records[i, mi] = (
                    sv.estimate,
                    truth,
                    bias,
                    abs(bias),
                    sv.ssd,
                    sv.se,
                    sv.ci_lower,
                    sv.ci_upper,
                    1.0 if sv.ci_lower <= truth <= sv.ci_upper else 0.0,
                    bias * bias,
                )
        except Exception as exc:
            failures.append(f"replicate {rep}: {type(exc).__name__}: {exc}")
    return start, records, failures


def run_study2(
    n: int = 500,
    nsim: int = 10000,
    m: int = 50,
    seed: int = DEFAULT_SEED,
    k: int = DEFAULT_DONORS,
    threads: int = 1,
    chunk: int = 64,
) -> Study2Result:
    """Single-value imputation sweep over the rank-blend weights.

    Every replicate draws a fresh skewed rho = 0.7 sample, masks one random
    outcome, imputes it m times per method, and contributes one record per
    method; aggregation averages the record columns, with
    rmse = sqrt(mean squared bias) and coverage the mean cover flag.
    """
    if nsim < 1:
        raise ValueError(f"study 2 needs nsim >= 1, got {nsim}")
    if m < 2:
        raise ValueError(f"study 2 needs m >= 2 imputations, got {m}")
    specs = study2_methods(k)
    payloads = [
        (start, min(chunk, nsim - start), n, m, seed, specs)
        for start in range(0, nsim, chunk)
    ]
    records = np.full((nsim, len(specs), len(_S2_COLUMNS)), np.nan)
    failures: list[str] = []
    for start, part, errors in _run_units(_study2_chunk, payloads, threads):
        records[start : start + part.shape[0]] = part
        failures.extend(errors)
    rows = []
    with np.errstate(invalid="ignore"):
        means = np.nanmean(records, axis=0)
    for mi, spec in enumerate(specs):
        col = dict(zip(_S2_COLUMNS, means[mi]))
        rows.append(
            Study2Row(
                method=spec.label,
                blend=None if spec.family == PMM else spec.blend,
                estimate=float(col["estimate"]),
                true=float(col["true"]),
                bias=float(col["bias"]),
                absbias=float(col["absbias"]),
                ssd=float(col["ssd"]),
                se=float(col["se"]),
                ci_lower=float(col["ci_lower"]),
                ci_upper=float(col["ci_upper"]),
                cov=float(col["cov"]),
                rmse=float(math.sqrt(col["sq_bias"])),
            )
        )
    return Study2Result(rows=rows, failures=failures)
