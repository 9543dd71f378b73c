"""Command-line interface for matching, imputation, and the two studies.

Examples:

    blendmatch match data.csv --target-row 0 --family ranked --blend 0.5
    blendmatch impute data.csv --m 20 --family scaled --blend 0.5 --out imps.csv
    blendmatch study1 --nsim 1000 --out results/study1
    blendmatch study2 --nsim 10000 --m 50 --out results/study2
    blendmatch demo-figure1 --out figure1.csv

Input CSVs carry the header ``x1,x2,x3,y``; empty ``y`` cells mark missing
outcomes.  Every command honors ``--seed`` (default 1234; fixed, never
time-based) so all outputs are reproducible.  ``--quiet`` switches stdout
to machine-parseable TSV.

Exit codes: 0 success, 1 invalid option values, 2 unreadable or malformed
input CSV, 3 dimension or row errors, 4 output I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from .datagen import GenConfig, gen_outcome, gen_predictors
from .distances import (
    FAMILIES,
    PMM,
    RANKED,
    BlendSpec,
    blend_ranked,
    blend_scaled,
    covariance_estimate,
    distance_table,
    mahalanobis_distances,
    predictive_distances,
    select_donors,
    write_distance_table,
)
from .harness import DEFAULT_SEED, ConditionGrid, run_study1, run_study2
from .imputation import Dataset, multiple_impute, pool_mean, result_to_csv, rng_stream
from .regression import bayes_draw, ols_fit, predict
from .tables import write_manifest, write_pooling_modes, write_tables

INPUT_HEADER = ("x1", "x2", "x3", "y")

_MATCH_STREAM = 21
_DEMO_STREAM = 25


class UsageError(Exception):
    """Bad option values (exit 1)."""


class InputFormatError(Exception):
    """Unreadable or malformed input CSV (exit 2)."""


class InputShapeError(Exception):
    """Row indices or dimensions that do not fit the data (exit 3)."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blendmatch",
        description="Donor matching and multiple imputation with blended distances.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                       help="random seed (default %(default)s; outputs are reproducible)")
        p.add_argument("--quiet", action="store_true", help="machine-parseable TSV stdout")
        p.add_argument("--config", metavar="FILE",
                       help="key = value file mirroring these flags; explicit flags override")

    p = sub.add_parser("match", help="print the k best donors for one target row")
    p.add_argument("csv_in", help="input CSV with header x1,x2,x3,y")
    p.add_argument("--target-row", type=int, required=True, help="0-based row of the target")
    p.add_argument("--family", choices=FAMILIES, default=RANKED)
    p.add_argument("--blend", type=float, default=0.5, help="weight on the predictive distance")
    p.add_argument("--k", type=int, default=5, help="number of donors (default %(default)s)")
    p.add_argument("--out", help="also write the full donor table as CSV")
    common(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("impute", help="multiply impute the missing outcomes of a CSV")
    p.add_argument("csv_in", help="input CSV with header x1,x2,x3,y")
    p.add_argument("--family", choices=FAMILIES, default=PMM)
    p.add_argument("--blend", type=float, default=1.0)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--m", type=int, default=5, help="number of imputations (default %(default)s)")
    p.add_argument("--out", required=True, help="output CSV (row, observed, one column per imputation)")
    common(p)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("study1", help="run the factorial study over conditions x methods")
    p.add_argument("--nsim", type=int, default=1000, help="replicates per cell (default %(default)s)")
    p.add_argument("--m", type=int, default=5, help="imputations per replicate (default %(default)s)")
    p.add_argument("--mechanism", choices=("mcar", "mar_right"), help="restrict to one mechanism")
    p.add_argument("--proportion", type=float, help="restrict to one missingness proportion")
    p.add_argument("--rho", type=float, help="restrict to one predictor correlation")
    p.add_argument("--skewed", action="store_true", help="restrict to the skewed conditions")
    p.add_argument("--threads", type=int, default=1, help="worker processes (does not affect results)")
    p.add_argument("--out", default="results/study1", help="output directory (default %(default)s)")
    common(p)
    p.set_defaults(func=cmd_study1)

    p = sub.add_parser("study2", help="run the single-value study over blend weights")
    p.add_argument("--nsim", type=int, default=10000, help="replicates (default %(default)s)")
    p.add_argument("--m", type=int, default=50, help="imputations per replicate (default %(default)s)")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--threads", type=int, default=1, help="worker processes (does not affect results)")
    p.add_argument("--out", default="results/study2", help="output directory (default %(default)s)")
    common(p)
    p.set_defaults(func=cmd_study2)

    p = sub.add_parser(
        "demo-figure1",
        help="emit a 199-donor predictive-vs-Mahalanobis scatter for synthetic data",
    )
    p.add_argument("--rho", type=float, default=0.7, help="predictor correlation (default %(default)s)")
    p.add_argument("--skewed", action="store_true", help="skew the synthetic predictors")
    p.add_argument("--out", default="figure1.csv", help="output CSV (default %(default)s)")
    common(p)
    p.set_defaults(func=cmd_demo_figure1)

    return parser


def _validate(args):
    if args.seed < 0:
        raise UsageError(f"--seed must be non-negative, got {args.seed}")
    blend = getattr(args, "blend", None)
    if blend is not None and not 0.0 <= blend <= 1.0:
        raise UsageError(f"--blend must lie in [0, 1], got {blend:g}")
    k = getattr(args, "k", None)
    if k is not None and k < 1:
        raise UsageError(f"--k must be at least 1, got {k}")
    m = getattr(args, "m", None)
    if m is not None and m < 1:
        raise UsageError(f"--m must be at least 1, got {m}")
    nsim = getattr(args, "nsim", None)
    if nsim is not None and nsim < 1:
        raise UsageError(f"--nsim must be at least 1, got {nsim}")
    threads = getattr(args, "threads", None)
    if threads is not None and threads < 1:
        raise UsageError(f"--threads must be at least 1, got {threads}")
    if args.command == "study1":
        if args.proportion is not None and not 0.0 < args.proportion < 1.0:
            raise UsageError(f"--proportion must lie in (0, 1), got {args.proportion:g}")
        if args.rho is not None and not 0.0 <= args.rho < 1.0:
            raise UsageError(f"--rho must lie in [0, 1), got {args.rho:g}")
    if args.command == "demo-figure1" and not 0.0 <= args.rho < 1.0:
        raise UsageError(f"--rho must lie in [0, 1), got {args.rho:g}")


def load_config_tokens(path) -> list:
    """Turn ``key = value`` lines into CLI tokens (``# comments`` allowed).

    Boolean keys use true/false; ``skewed = true`` becomes the bare flag.
    """
    tokens = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise InputFormatError(f"{path}:{lineno}: expected key = value")
                key, value = (part.strip() for part in line.split("=", 1))
                if not key or not value:
                    raise InputFormatError(f"{path}:{lineno}: expected key = value")
                if value.lower() in ("true", "false"):
                    if value.lower() == "true":
                        tokens.append(f"--{key}")
                else:
                    tokens.extend([f"--{key}", value])
    except OSError as exc:
        raise InputFormatError(f"{path}: {exc}") from exc
    return tokens


def _inject_config(argv) -> list:
    """Splice --config FILE contents in right after the subcommand.

    Injected tokens come first, so flags given explicitly on the command
    line override the file.
    """
    argv = list(argv)
    if "--config" not in argv:
        return argv
    at = argv.index("--config")
    if at + 1 >= len(argv):
        raise InputFormatError("--config needs a file path")
    tokens = load_config_tokens(argv[at + 1])
    rest = argv[:at] + argv[at + 2 :]
    if not rest or rest[0].startswith("-"):
        raise InputFormatError("--config must follow a subcommand")
    return [rest[0], *tokens, *rest[1:]]


def read_input_csv(path) -> Dataset:
    """Read the ``x1,x2,x3,y`` schema; empty y cells mark missing outcomes."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise InputFormatError(f"{path}: empty file") from None
            if tuple(h.strip().lower() for h in header) != INPUT_HEADER:
                raise InputFormatError(
                    f"{path}: expected header {','.join(INPUT_HEADER)}, got {','.join(header)}"
                )
            xs, ys, mask = [], [], []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 4:
                    raise InputFormatError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
                try:
                    xs.append([float(v) for v in row[:3]])
                except ValueError:
                    raise InputFormatError(
                        f"{path}:{lineno}: predictors must be numeric, got {row[:3]}"
                    ) from None
                cell = row[3].strip()
                if cell == "" or cell.lower() in ("na", "nan"):
                    ys.append(np.nan)
                    mask.append(True)
                else:
                    try:
                        ys.append(float(cell))
                    except ValueError:
                        raise InputFormatError(
                            f"{path}:{lineno}: outcome must be numeric or empty, got {cell!r}"
                        ) from None
                    mask.append(False)
    except OSError as exc:
        raise InputFormatError(f"{path}: {exc}") from exc
    if not xs:
        raise InputFormatError(f"{path}: no data rows")
    return Dataset(x=np.asarray(xs), y=np.asarray(ys), mask=np.asarray(mask))


def _emit_table(header, rows, quiet):
    if quiet:
        print("\t".join(header))
        for row in rows:
            print("\t".join(str(v) for v in row))
    else:
        widths = [max(len(h), 12) for h in header]
        print("  ".join(h.rjust(w) for h, w in zip(header, widths)))
        for row in rows:
            cells = [
                f"{v:.6f}" if isinstance(v, float) else str(v)
                for v in row
            ]
            print("  ".join(c.rjust(w) for c, w in zip(cells, widths)))


def cmd_match(args) -> int:
    data = read_input_csv(args.csv_in)
    n = data.n
    if not 0 <= args.target_row < n:
        raise InputShapeError(f"--target-row {args.target_row} outside 0..{n - 1}")
    donor_rows = np.flatnonzero(~data.mask)
    donor_rows = donor_rows[donor_rows != args.target_row]
    if donor_rows.size < args.k:
        raise InputShapeError(f"only {donor_rows.size} donors available for k={args.k}")
    if donor_rows.size < data.n_predictors + 2:
        raise InputShapeError(
            f"need at least {data.n_predictors + 2} donors to fit the model, got {donor_rows.size}"
        )
    spec = BlendSpec(args.family, args.blend, args.k)
    rng = rng_stream(args.seed, _MATCH_STREAM)
    x_donor = data.x[donor_rows]
    fit = ols_fit(x_donor, data.y[donor_rows])
    draw = bayes_draw(fit, rng)
    donor_preds = predict(fit.coefs, x_donor)
    target_pred = float(predict(draw.coefs, data.x[args.target_row][None, :])[0])
    cov = covariance_estimate(data.x)
    pd = predictive_distances(donor_preds, target_pred)
    md = mahalanobis_distances(data.x[args.target_row], x_donor, cov)
    if spec.family == PMM:
        blended = pd
    elif spec.family == RANKED:
        blended = blend_ranked(pd, md, spec.blend, rng)
    else:
        blended = blend_scaled(pd, md, spec.blend)
    chosen = select_donors(blended, spec.k, rng)
    header = ("index", "pd", "md", "blend_value")
    rows = [
        (int(donor_rows[i]), float(pd.values[i]), float(md.values[i]), float(blended.values[i]))
        for i in chosen
    ]
    _emit_table(header, rows, args.quiet)
    if args.out:
        table = np.column_stack(
            [donor_rows.astype(float), pd.values, md.values, blended.values]
        )
        order = np.argsort(blended.values, kind="stable")
        try:
            with open(args.out, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                for i in order:
                    writer.writerow(
                        [int(table[i, 0])] + [repr(float(v)) for v in table[i, 1:]]
                    )
        except OSError as exc:
            raise OSError(f"writing {args.out}: {exc}") from exc
    return 0


def cmd_impute(args) -> int:
    data = read_input_csv(args.csv_in)
    spec = BlendSpec(args.family, args.blend, args.k)
    try:
        result = multiple_impute(data, spec, args.m, args.seed)
    except ValueError as exc:
        raise InputShapeError(str(exc)) from exc
    result_to_csv(result, args.out)
    if args.m >= 2:
        pooled = pool_mean(result)
        if args.quiet:
            print("qbar\tse\tdf\tci_lower\tci_upper\tm")
            print(
                f"{pooled.qbar}\t{np.sqrt(pooled.t_var)}\t{pooled.df}"
                f"\t{pooled.ci_lower}\t{pooled.ci_upper}\t{pooled.m}"
            )
        else:
            print(f"wrote {args.m} imputations of {data.n_missing} missing values to {args.out}")
            print(
                f"pooled mean {pooled.qbar:.4f} "
                f"(95% CI {pooled.ci_lower:.4f} to {pooled.ci_upper:.4f}, df {pooled.df:.1f})"
            )
    elif not args.quiet:
        print(f"wrote {args.m} imputation of {data.n_missing} missing values to {args.out}")
    return 0


def _study1_grid(args) -> ConditionGrid:
    kwargs = {}
    if args.mechanism is not None:
        kwargs["mechanisms"] = (args.mechanism,)
    if args.proportion is not None:
        kwargs["proportions"] = (args.proportion,)
    if args.rho is not None:
        kwargs["correlations"] = (args.rho,)
    if args.skewed:
        kwargs["distributions"] = ("skewed",)
    return ConditionGrid(**kwargs)


def cmd_study1(args) -> int:
    grid = _study1_grid(args)
    progress = None
    if not args.quiet:
        total_cells = grid.n_cells

        def progress(done, total, condition, spec):
            print(f"cell {done}/{total_cells}: {condition.label}/{spec.label}", file=sys.stderr)

    result = run_study1(
        grid,
        nsim=args.nsim,
        m_per_sim=args.m,
        seed=args.seed,
        threads=args.threads,
        progress=progress,
    )
    for failure in result.failures:
        print(f"FAILED cell {failure}", file=sys.stderr)
    write_tables(result.rows, args.out)
    write_pooling_modes(result.pooling_rows, args.out)
    write_manifest(
        args.out,
        {
            "command": "study1",
            "seed": args.seed,
            "n": 500,
            "nsim": args.nsim,
            "m_per_sim": args.m,
            "conditions": len(grid.conditions()),
            "methods": ",".join(spec.label for spec in grid.methods),
            "failures": len(result.failures),
        },
    )
    print(f"wrote {len(result.rows)} rows to {args.out}" if not args.quiet
          else f"rows\t{len(result.rows)}\nout\t{args.out}")
    return 0


def cmd_study2(args) -> int:
    result = run_study2(
        nsim=args.nsim,
        m=args.m,
        seed=args.seed,
        k=args.k,
        threads=args.threads,
    )
    for failure in result.failures:
        print(f"FAILED {failure}", file=sys.stderr)
    write_tables(result.rows, args.out)
    write_manifest(
        args.out,
        {
            "command": "study2",
            "seed": args.seed,
            "n": 500,
            "nsim": args.nsim,
            "m": args.m,
            "k": args.k,
            "methods": len(result.rows),
            "failures": len(result.failures),
        },
    )
    print(f"wrote {len(result.rows)} rows to {args.out}" if not args.quiet
          else f"rows\t{len(result.rows)}\nout\t{args.out}")
    return 0


def cmd_demo_figure1(args) -> int:
    rng = rng_stream(args.seed, _DEMO_STREAM)
    config = GenConfig(n=200, rho=args.rho, skewed=args.skewed)
    x = gen_predictors(config, rng)
    y = gen_outcome(x, config.sigma_eps, rng)
    donors = x[1:]
    fit = ols_fit(donors, y[1:])
    donor_preds = predict(fit.coefs, donors)
    target_pred = float(predict(fit.coefs, x[:1])[0])
    cov = covariance_estimate(x)
    table = distance_table(donors, donor_preds, x[0], target_pred, cov)
    write_distance_table(table, args.out)
    if not args.quiet:
        print(f"wrote {table.shape[0]} donor rows to {args.out}")
    else:
        print(f"rows\t{table.shape[0]}\nout\t{args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    try:
        argv = _inject_config(argv)
    except InputFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits on usage errors; keep the int contract
        return int(exc.code or 0)
    try:
        _validate(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(parser.format_usage(), end="", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except InputFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InputShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
