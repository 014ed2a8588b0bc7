"""Report emission: per-curve CSV, JSON summary, and a hand-drawn log-log SVG.

CSV files carry no wall-clock fields so that reruns with the same seeds are
byte-identical.
"""

from __future__ import annotations

import csv
import math
import re
from pathlib import Path
from xml.sax.saxutils import escape

from .experiments import ExperimentReport
from .serialize import dumps

CURVE_COLUMNS = ["method", "N_min", "mean", "ci_low", "ci_high"]
TRIAL_COLUMNS = ["method", "trial", "N_min", "seed", "suboptimality", "value_gap"]
FORMATS = ("csv", "json", "svg")
PALETTE = ("#1f3b73", "#d9792b", "#3a8f5c", "#a23b72", "#6b6b6b")


class ReportIOError(OSError):
    """Writing a report file failed; the message names the path."""


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9.]+", "_", text).strip("_")


def _write_rows(path: Path, header, rows) -> Path:
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc}") from exc
    return path


def curve_rows(curve) -> list:
    return [[curve.name, p.x, repr(p.mean), repr(p.ci_low), repr(p.ci_high)] for p in curve.points]


def read_curve_csv(path) -> list[tuple]:
    """Parse a curve CSV into ``(method, N_min, mean, ci_low, ci_high)`` tuples."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CURVE_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        return [(r[0], int(r[1]), float(r[2]), float(r[3]), float(r[4])) for r in reader]


def emit_report(report: ExperimentReport, formats=FORMATS, out_dir=".") -> list[Path]:
    """Write the requested formats into ``out_dir`` and return the created paths."""
    unknown = set(formats) - set(FORMATS)
    if unknown:
        raise ValueError(f"unknown report formats {sorted(unknown)}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportIOError(f"cannot create {out}: {exc}") from exc
    written = []
    kind = report.kind
    if "csv" in formats:
        for c in report.curves:
            written.append(_write_rows(out / f"{kind}_{c.metric}_{_slug(c.name)}.csv", CURVE_COLUMNS, curve_rows(c)))
        trial_rows = [[t.method, t.trial, "" if t.N is None else t.N, t.seed, repr(t.suboptimality),
                       repr(t.value_gap)] for t in report.trials]
        written.append(_write_rows(out / f"{kind}_trials.csv", TRIAL_COLUMNS, trial_rows))
    summary = report.summary()
    if "json" in formats:
        path = out / f"{kind}_summary.json"
        try:
            path.write_text(dumps(summary) + "\n", encoding="utf-8")
        except OSError as exc:
            raise ReportIOError(f"cannot write {path}: {exc}") from exc
        written.append(path)
    if "svg" in formats:
        for metric in sorted({c["metric"] for c in summary["curves"]}):
            path = out / f"{kind}_{metric}.svg"
            try:
                path.write_text(render_svg(summary, metric), encoding="utf-8")
            except OSError as exc:
                raise ReportIOError(f"cannot write {path}: {exc}") from exc
            written.append(path)
    return written


# ---------------------------------------------------------------------------
# svg


def render_svg(summary: dict, metric: str, width: int = 560, height: int = 400) -> str:
    """Log-log scatter with 95% error bars and a dashed fitted line per curve.

    Works from the JSON summary so that ``plot`` can redraw a saved run.
    """
    curves = [c for c in summary.get("curves", []) if c["metric"] == metric]
    pts = [(p["x"], p["mean"], p["half_width"]) for c in curves for p in c["points"] if p["mean"] > 0]
    left, right, top, bottom = 70, 20, 30, 50
    pw, ph = width - left - right, height - top - bottom
    if pts:
        lx = [math.log10(x) for x, _, _ in pts]
        ly = [math.log10(y) for _, y, _ in pts] + [math.log10(y + h) for _, y, h in pts]
        x0, x1 = math.floor(min(lx)), math.ceil(max(lx))
        y0, y1 = math.floor(min(ly)), math.ceil(max(ly))
    else:
        x0, x1, y0, y1 = 0, 1, 0, 1
    x1 = max(x1, x0 + 1)
    y1 = max(y1, y0 + 1)

    def px(x):
        return left + (math.log10(x) - x0) / (x1 - x0) * pw

    def py(y):
        v = math.log10(max(y, 10.0 ** y0))
        return top + (y1 - v) / (y1 - y0) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
             f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>']
    for e in range(x0, x1 + 1):
        x = px(10.0 ** e)
        parts.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        parts.append(f'<text x="{x:.2f}" y="{top + ph + 18}" text-anchor="middle">1e{e}</text>')
    for e in range(y0, y1 + 1):
        y = py(10.0 ** e)
        parts.append(f'<line x1="{left - 5}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        parts.append(f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end">1e{e}</text>')
    parts.append(f'<text x="{left + pw / 2:.2f}" y="{height - 10}" text-anchor="middle">N_min</text>')
    parts.append(f'<text x="15" y="{top + ph / 2:.2f}" text-anchor="middle" '
                 f'transform="rotate(-90 15 {top + ph / 2:.2f})">{escape(metric)}</text>')
    for idx, c in enumerate(curves):
        color = PALETTE[idx % len(PALETTE)]
        for p in c["points"]:
            if p["mean"] <= 0:
                continue
            x = px(p["x"])
            lo, hi = py(p["mean"] - p["half_width"]), py(p["mean"] + p["half_width"])
            parts.append(f'<line x1="{x:.2f}" y1="{lo:.2f}" x2="{x:.2f}" y2="{hi:.2f}" stroke="{color}"/>')
            parts.append(f'<circle cx="{x:.2f}" cy="{py(p["mean"]):.2f}" r="3" fill="{color}"/>')
        label = c["name"]
        fit = c.get("fit")
        if fit:
            xs = [p["x"] for p in c["points"] if p["mean"] > 0]
            a, b = min(xs), max(xs)
            ya = math.exp(fit["intercept"]) * a ** fit["slope"]
            yb = math.exp(fit["intercept"]) * b ** fit["slope"]
            parts.append(f'<path d="M {px(a):.2f} {py(ya):.2f} L {px(b):.2f} {py(yb):.2f}" '
                         f'stroke="{color}" stroke-dasharray="5,4" fill="none"/>')
            label += f" (slope {fit['slope']:.2f})"
        parts.append(f'<text x="{left + pw - 5}" y="{top + 14 * (idx + 1)}" text-anchor="end" '
                     f'fill="{color}">{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
