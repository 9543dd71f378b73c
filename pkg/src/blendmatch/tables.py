"""CSV and SVG exports of the simulation results.

Floats are written with ``repr``, i.e. the shortest string that parses
back to the exact same double, so emitted files round-trip losslessly
and rerunning with the same seed reproduces them byte for byte.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .harness import PoolingModeRow, Study1Row, Study2Row

STUDY1_HEADER = (
    "mech", "mis", "dist", "cor",
    "qbar", "se", "t", "df", "b", "2.5%", "97.5%", "true", "cov", "bias", "R2",
)
STUDY2_HEADER = (
    "method", "estimate", "true", "bias", "absbias", "ssd", "se", "lwr", "upr", "cov", "rmse",
)
POOLING_HEADER = (
    "mech", "mis", "dist", "cor", "method", "mode",
    "qbar", "se", "t", "df", "b", "2.5%", "97.5%", "cov",
)
FIGURE_HEADER = ("condition", "method", "value")
FIGURE5_HEADER = ("blend", "se", "cov")


def _fmt(value):
    return repr(float(value))


def _open_writer(path):
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise OSError(f"writing {path}: {exc}") from exc


def _study1_values(row: Study1Row):
    return [
        row.mech, row.mis, row.dist, row.cor,
        _fmt(row.qbar), _fmt(row.se), _fmt(row.t), _fmt(row.df), _fmt(row.b),
        _fmt(row.ci_lower), _fmt(row.ci_upper), _fmt(row.true),
        _fmt(row.cov), _fmt(row.bias), _fmt(row.r2),
    ]


def write_tables(rows, out_dir) -> list[Path]:
    """Write the result tables for a list of Study1Row or Study2Row."""
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to write")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(rows[0], Study1Row):
        return write_study1_tables(rows, out_dir)
    if isinstance(rows[0], Study2Row):
        return write_study2_tables(rows, out_dir)
    raise TypeError(f"cannot write rows of type {type(rows[0]).__name__}")


def write_study1_tables(rows, out_dir) -> list[Path]:
    """One per-method table, the long-format results, and the figure panels."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    methods = []
    for row in rows:
        if row.method not in methods:
            methods.append(row.method)
    for method in methods:
        path = out_dir / f"table_{method}.csv"
        with _open_writer(path) as fh:
            writer = csv.writer(fh)
            writer.writerow(STUDY1_HEADER)
            for row in rows:
                if row.method == method:
                    writer.writerow(_study1_values(row))
        written.append(path)
    path = out_dir / "results.csv"
    with _open_writer(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(("method",) + STUDY1_HEADER)
        for row in rows:
            writer.writerow([row.method] + _study1_values(row))
    written.append(path)
    panels = (
        ("figure2.csv", lambda r: r.bias),
        ("figure3.csv", lambda r: r.cov),
        ("figure4.csv", lambda r: r.r2),
    )
    for name, value in panels:
        path = out_dir / name
        with _open_writer(path) as fh:
            writer = csv.writer(fh)
            writer.writerow(FIGURE_HEADER)
            for row in rows:
                condition = f"{row.mech}_{row.mis}_{row.dist}_{row.cor}"
                writer.writerow([condition, row.method, _fmt(value(row))])
        written.append(path)
    return written


def write_pooling_modes(rows, out_dir) -> Path:
    """Across-replicate pooled columns under both pooling modes, side by side."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "pooling_modes.csv"
    with _open_writer(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(POOLING_HEADER)
        for row in rows:
            if not isinstance(row, PoolingModeRow):
                raise TypeError(f"expected PoolingModeRow, got {type(row).__name__}")
            writer.writerow(
                [
                    row.mech, row.mis, row.dist, row.cor, row.method, row.mode,
                    _fmt(row.qbar), _fmt(row.se), _fmt(row.t), _fmt(row.df), _fmt(row.b),
                    _fmt(row.ci_lower), _fmt(row.ci_upper), _fmt(row.cov),
                ]
            )
    return path


def write_study2_tables(rows, out_dir) -> list[Path]:
    """The single-value study table plus the blend-trend export and chart."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    path = out_dir / "table8.csv"
    with _open_writer(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(STUDY2_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row.method,
                    _fmt(row.estimate), _fmt(row.true), _fmt(row.bias), _fmt(row.absbias),
                    _fmt(row.ssd), _fmt(row.se), _fmt(row.ci_lower), _fmt(row.ci_upper),
                    _fmt(row.cov), _fmt(row.rmse),
                ]
            )
    written.append(path)
    trend = [row for row in rows if row.blend is not None]
    path = out_dir / "figure5.csv"
    with _open_writer(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(FIGURE5_HEADER)
        for row in trend:
            writer.writerow([_fmt(row.blend), _fmt(row.se), _fmt(row.cov)])
    written.append(path)
    if trend:
        path = out_dir / "figure5.svg"
        write_figure5_svg(trend, path)
        written.append(path)
    return written


def write_figure5_svg(rows, path):
    """Minimal dual-axis line chart: SE (left) and coverage (right) vs blend."""
    pts = sorted(((r.blend, r.se, r.cov) for r in rows if r.blend is not None))
    if not pts:
        raise ValueError("no blend rows to chart")
    width, height = 640, 400
    left, right, top, bottom = 70, 70, 30, 50
    plot_w = width - left - right
    plot_h = height - top - bottom
    se_values = [p[1] for p in pts]
    se_lo = min(se_values)
    se_hi = max(se_values)
    if se_hi == se_lo:
        se_hi = se_lo + 1.0
    pad = 0.08 * (se_hi - se_lo)
    se_lo, se_hi = se_lo - pad, se_hi + pad

    def x_px(blend):
        return left + blend * plot_w

    def se_px(v):
        return top + (1.0 - (v - se_lo) / (se_hi - se_lo)) * plot_h

    def cov_px(v):
        return top + (1.0 - v) * plot_h

    se_line = " ".join(f"{x_px(b):.2f},{se_px(s):.2f}" for b, s, _ in pts)
    cov_line = " ".join(f"{x_px(b):.2f},{cov_px(c):.2f}" for b, _, c in pts)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#888"/>',
        f'<polyline points="{se_line}" fill="none" stroke="#2a9d4e" stroke-width="2"/>',
        f'<polyline points="{cov_line}" fill="none" stroke="#e08a1e" stroke-width="2"/>',
    ]
    for b, s, c in pts:
        parts.append(f'<circle cx="{x_px(b):.2f}" cy="{se_px(s):.2f}" r="3" fill="#2a9d4e"/>')
        parts.append(f'<circle cx="{x_px(b):.2f}" cy="{cov_px(c):.2f}" r="3" fill="#e08a1e"/>')
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(
            f'<text x="{x_px(tick):.2f}" y="{height - bottom + 18}" font-size="11" '
            f'text-anchor="middle">{tick:g}</text>'
        )
        parts.append(
            f'<text x="{left - 8}" y="{cov_px(tick) + 4:.2f}" font-size="11" '
            f'text-anchor="end" fill="#e08a1e">{tick:g}</text>'
        )
    for frac in (0.0, 0.5, 1.0):
        v = se_lo + frac * (se_hi - se_lo)
        parts.append(
            f'<text x="{width - right + 8}" y="{se_px(v) + 4:.2f}" font-size="11" '
            f'text-anchor="start" fill="#2a9d4e">{v:.3g}</text>'
        )
    parts.append(
        f'<text x="{left + plot_w / 2:.2f}" y="{height - 12}" font-size="12" '
        'text-anchor="middle">blend factor (weight on predictive distance)</text>'
    )
    parts.append(
        f'<text x="{width - 16}" y="{top + plot_h / 2:.2f}" font-size="12" text-anchor="middle" '
        f'transform="rotate(90 {width - 16} {top + plot_h / 2:.2f})" fill="#2a9d4e">average SE</text>'
    )
    parts.append(
        f'<text x="16" y="{top + plot_h / 2:.2f}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + plot_h / 2:.2f})" fill="#e08a1e">coverage</text>'
    )
    parts.append("</svg>")
    try:
        Path(path).write_text("\n".join(parts) + "\n")
    except OSError as exc:
        raise OSError(f"writing {path}: {exc}") from exc


def write_manifest(out_dir, params: dict) -> Path:
    """Record the run parameters as deterministic key = value lines.

    Worker count is intentionally not recorded: it does not affect results,
    and reruns with a different count must stay byte-identical.
    """
    import numpy
    import scipy

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "manifest.txt"
    entries = dict(params)
    entries.setdefault("blendmatch", "0.1.0")
    entries.setdefault("numpy", numpy.__version__)
    entries.setdefault("scipy", scipy.__version__)
    lines = [f"{key} = {entries[key]}" for key in sorted(entries)]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"writing {path}: {exc}") from exc
    return path
