"""Result files: CSV tables and a native SVG box summary.

Floats are written with ``repr`` so every value round-trips exactly; no
timestamps or wall-clock values enter ``rows.csv``, which keeps it
byte-identical across reruns. Timings go to ``timings.csv``.
"""

from __future__ import annotations

import csv
from dataclasses import asdict
from pathlib import Path
from xml.etree import ElementTree as ET
from xml.sax.saxutils import quoteattr

import numpy as np

ROW_COLUMNS = ("replication", "n", "d", "variant", "estimate", "h", "n_used", "min_fhat", "status")
SUMMARY_COLUMNS = ("variant", "count", "excluded", "mean", "bias", "std", "rmse", "minimum", "q1", "median", "q3", "maximum")
CLT_COLUMNS = (
    "kind", "n", "replications", "h", "gamma", "mean", "variance", "standardized_mean",
    "theoretical_variance", "ratio", "alternative", "alternative_variance", "alternative_ratio",
    "matches", "ks_statistic", "ks_pvalue", "failed",
)


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv_stream(fh, columns, records) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for rec in records:
        w.writerow([fmt(rec[c]) for c in columns])


def write_csv(path, columns, records) -> None:
    with open(path, "w", newline="") as fh:
        write_csv_stream(fh, columns, records)


def write_rows(rows, path) -> None:
    write_csv(path, ROW_COLUMNS, (asdict(r) for r in rows))


def write_timings(rows, path) -> None:
    write_csv(path, ("replication", "n", "variant", "wall_time"), (asdict(r) for r in rows))


def read_rows(path) -> list[dict]:
    """Parse ``rows.csv`` back into dicts with typed values (empty fields become None)."""
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            parsed = {}
            for key, raw in rec.items():
                if raw == "":
                    parsed[key] = None
                elif key in ("replication", "n", "d", "n_used"):
                    parsed[key] = int(raw)
                elif key in ("estimate", "h", "min_fhat"):
                    parsed[key] = float(raw)
                else:
                    parsed[key] = raw
            out.append(parsed)
    return out


def write_summary(summary, path) -> None:
    write_csv(path, SUMMARY_COLUMNS, (asdict(s) for s in summary))


# --------------------------------------------------------------------------
# SVG


def boxes_svg(summary, target: float | None = None, title: str = "estimates") -> str:
    """One horizontal box per variant: whiskers at min/max, box at the quartiles.

    Each box group carries the exact statistics as ``data-*`` attributes.
    """
    boxes = [s for s in summary if s.count > 0]
    width, row_h, left, right, top = 640, 48, 150, 30, 40
    height = top + row_h * max(len(boxes), 1) + 40
    values = [v for s in boxes for v in (s.minimum, s.maximum)]
    if target is not None:
        values.append(target)
    lo, hi = (min(values), max(values)) if values else (0.0, 1.0)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    def x(v):
        return left + (v - lo) / (hi - lo) * (width - left - right)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<text x="{width / 2:.2f}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>',
    ]
    if target is not None:
        tx = x(target)
        out.append(
            f'<line class="target" x1="{tx:.2f}" y1="{top - 10}" x2="{tx:.2f}" y2="{height - 30}" '
            f'stroke="#888" stroke-dasharray="4 3" data-target={quoteattr(fmt(target))}/>'
        )
    for i, s in enumerate(boxes):
        cy = top + row_h * i + row_h / 2
        attrs = " ".join(
            f"data-{k}={quoteattr(fmt(getattr(s, k)))}" for k in ("variant", "count", "minimum", "q1", "median", "q3", "maximum")
        )
        out.append(f'<g class="box" {attrs}>')
        out.append(
            f'<text x="{left - 10}" y="{cy + 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="12">{s.variant}</text>'
        )
        out.append(f'<line x1="{x(s.minimum):.2f}" y1="{cy:.2f}" x2="{x(s.q1):.2f}" y2="{cy:.2f}" stroke="black"/>')
        out.append(f'<line x1="{x(s.q3):.2f}" y1="{cy:.2f}" x2="{x(s.maximum):.2f}" y2="{cy:.2f}" stroke="black"/>')
        out.append(
            f'<rect x="{x(s.q1):.2f}" y="{cy - 14:.2f}" width="{max(x(s.q3) - x(s.q1), 0.5):.2f}" height="28" '
            'fill="#cfe0f3" stroke="black"/>'
        )
        out.append(f'<line x1="{x(s.median):.2f}" y1="{cy - 14:.2f}" x2="{x(s.median):.2f}" y2="{cy + 14:.2f}" stroke="black" stroke-width="2"/>')
        out.append("</g>")
    axis_y = height - 30
    out.append(f'<line x1="{left}" y1="{axis_y}" x2="{width - right}" y2="{axis_y}" stroke="black"/>')
    for tick in np.linspace(lo, hi, 5):
        out.append(
            f'<text x="{x(tick):.2f}" y="{axis_y + 16}" text-anchor="middle" font-family="sans-serif" font-size="10">{tick:.4g}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def svg_box_stats(text: str) -> dict[str, dict[str, float]]:
    """Read the ``data-*`` statistics back out of :func:`boxes_svg` output."""
    root = ET.fromstring(text)
    out = {}
    for g in root.iter("{http://www.w3.org/2000/svg}g"):
        if g.get("class") != "box":
            continue
        out[g.get("data-variant")] = {
            k: float(g.get(f"data-{k}")) for k in ("minimum", "q1", "median", "q3", "maximum")
        }
    return out


# --------------------------------------------------------------------------
# bundles


def write_benchmark(result, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_rows(result.rows, out / "rows.csv")
    write_timings(result.rows, out / "timings.csv")
    write_summary(result.summary, out / "summary.csv")
    cfg = result.config
    title = f"{cfg.model} d={cfg.d} n={cfg.n} replications={cfg.replications}"
    (out / "boxes.svg").write_text(boxes_svg(result.summary, result.target, title))
    return out


def write_clt(summaries, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "clt.csv", CLT_COLUMNS, (s.to_dict() for s in summaries))
    rows = [r for s in summaries for r in s.rows]
    write_rows(rows, out / "rows.csv")
    write_timings(rows, out / "timings.csv")
    records = [
        {"kind": s.kind, "n": s.n, "index": i, "statistic": float(v)}
        for s in summaries
        for i, v in enumerate(s.statistics)
    ]
    write_csv(out / "clt_statistics.csv", ("kind", "n", "index", "statistic"), records)
    return out


def write_rate(check, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_rows(check.rows, out / "rows.csv")
    write_timings(check.rows, out / "timings.csv")
    fits = [
        {
            "variant": f.variant,
            "gamma": check.gamma,
            "h_constant": check.h_constant,
            "slope": f.slope,
            "stderr": f.stderr,
            "ci_low": f.ci_low,
            "ci_high": f.ci_high,
        }
        for f in check.fits.values()
    ]
    write_csv(out / "rate.csv", ("variant", "gamma", "h_constant", "slope", "stderr", "ci_low", "ci_high"), fits)
    points = [
        {"variant": f.variant, "n": n, "rmse": r}
        for f in check.fits.values()
        for n, r in zip(f.n_grid, f.rmse)
    ]
    write_csv(out / "rate_points.csv", ("variant", "n", "rmse"), points)
    return out


def write_functional(check, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_rows(check.rows, out / "rows.csv")
    write_timings(check.rows, out / "timings.csv")
    records = [
        {"functional": check.functional, "n": n, "mean": m, "scaled_variance": v}
        for n, m, v in zip(check.n_grid, check.mean, check.scaled_variance)
    ]
    write_csv(out / "functional.csv", ("functional", "n", "mean", "scaled_variance"), records)
    return out
