"""Charts (hand-written SVG) and tables, each next to a CSV of the plotted numbers.

Layout under the report root::

    <experiment>/evolution.{svg,csv}
    <experiment>/conditions.{svg,csv}
    <experiment>/closed_stations.{svg,csv}
    grid/evolution.{svg,csv}  grid/conditions.{svg,csv}
    grid/timing.{svg,csv}     grid/summary.{txt,csv}
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

Z95 = 1.959963984540054
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939", "#8c6d31", "#843c39")
CONDITION_TERMS = (("stable", "intercept"), ("covid", "covid"), ("protest", "protest"),
                   ("saturday", "saturday"), ("holidays", "holidays"),
                   ("covid:saturday", "covid:saturday"), ("covid:holidays", "covid:holidays"))

W, H = 760, 380
ML, MR, MT, MB = 64, 180, 30, 48


def _f(x: float) -> str:
    return f"{x:.2f}"


class _Svg:
    def __init__(self, title: str, width: int = W, height: int = H):
        self.width, self.height = width, height
        self.parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
                      f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
                      f'<rect width="{width}" height="{height}" fill="white"/>',
                      f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">'
                      f'{escape(title)}</text>']

    def add(self, s: str):
        self.parts.append(s)

    def line(self, x1, y1, x2, y2, color="#000", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.add(f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
                 f'stroke="{color}" stroke-width="{width}"{d}/>')

    def rect(self, x, y, w, h, fill, opacity=1.0):
        self.add(f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(max(w, 0))}" height="{_f(max(h, 0))}" '
                 f'fill="{fill}" fill-opacity="{opacity}"/>')

    def text(self, x, y, s, anchor="start", size=11, rotate=None):
        rot = f' transform="rotate({rotate} {_f(x)} {_f(y)})"' if rotate is not None else ""
        self.add(f'<text x="{_f(x)}" y="{_f(y)}" text-anchor="{anchor}" font-size="{size}"{rot}>'
                 f'{escape(str(s))}</text>')

    def polyline(self, pts, color, width=1.5):
        if not pts:
            return
        coords = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
        self.add(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="{width}"/>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _nice_max(v: float) -> float:
    if not np.isfinite(v) or v <= 0:
        return 1.0
    mag = 10 ** math.floor(math.log10(v))
    for step in (1, 2, 2.5, 5, 10):
        if step * mag >= v:
            return step * mag
    return 10 * mag


def _axes(svg: _Svg, y_lo: float, y_hi: float, y_label: str, ticks: int = 5):
    x0, x1, y0, y1 = ML, svg.width - MR, svg.height - MB, MT
    svg.line(x0, y0, x1, y0)
    svg.line(x0, y0, x0, y1)
    for k in range(ticks + 1):
        v = y_lo + (y_hi - y_lo) * k / ticks
        y = y0 - (y0 - y1) * k / ticks
        svg.line(x0 - 4, y, x0, y)
        svg.line(x0, y, x1, y, color="#e0e0e0", width=0.5)
        svg.text(x0 - 6, y + 4, f"{v:.3g}", anchor="end")
    svg.text(16, (y0 + y1) / 2, y_label, anchor="middle", rotate=-90)
    return x0, x1, y0, y1


def _legend(svg: _Svg, labels):
    x = svg.width - MR + 12
    for k, lab in enumerate(labels):
        y = MT + 14 + 16 * k
        svg.rect(x, y - 8, 12, 8, PALETTE[k % len(PALETTE)])
        svg.text(x + 18, y, lab)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else repr(x)


# ---------------------------------------------------------------- evolution

def render_evolution(series_set, out_dir, shaded=None, title="7-day rolling system MAAPE"):
    """One line per experiment; ``shaded`` maps a label to inclusive date ranges.

    Writes ``evolution.svg`` and ``evolution.csv``; returns both paths.
    """
    series_set = list(series_set)
    if not series_set:
        raise ValueError("render_evolution needs at least one series")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    all_dates = sorted({d for s in series_set for d in s.dates})
    d0, d1 = all_dates[0], all_dates[-1]
    span = max((d1 - d0).days, 1)
    finite = [v for s in series_set for v in s.rolling7 if np.isfinite(v)]
    y_hi = _nice_max(max(finite) if finite else 1.0)
    svg = _Svg(title)
    x0, x1, y0, y1 = _axes(svg, 0.0, y_hi, "MAAPE (rad)")

    def px(d):
        return x0 + (x1 - x0) * (d - d0).days / span

    def py(v):
        return y0 - (y0 - y1) * v / y_hi

    for k, (label, ranges) in enumerate(sorted((shaded or {}).items())):
        for a, b in ranges:
            a, b = max(a, d0), min(b, d1)
            if a <= b:
                svg.rect(px(a), y1, px(b) - px(a), y0 - y1, ("#999", "#c9a")[k % 2], 0.18)
                svg.text(px(a) + 2, y1 + 12 + 12 * k, label, size=10)
    svg.text(x0, y0 + 16, d0.isoformat(), anchor="start")
    svg.text(x1, y0 + 16, d1.isoformat(), anchor="end")
    rows = []
    for k, s in enumerate(series_set):
        pts = []
        for d, v in zip(s.dates, s.rolling7):
            rows.append([s.experiment, d.isoformat(), _num(v)])
            if np.isfinite(v):
                pts.append((px(d), py(v)))
            elif pts:
                svg.polyline(pts, PALETTE[k % len(PALETTE)])
                pts = []
        svg.polyline(pts, PALETTE[k % len(PALETTE)])
    _legend(svg, [s.experiment for s in series_set])
    svg_path, csv_path = out / "evolution.svg", out / "evolution.csv"
    svg_path.write_text(svg.render(), encoding="utf-8")
    _write_csv(csv_path, ["experiment", "date", "rolling7"], rows)
    return svg_path, csv_path


# --------------------------------------------------------------- conditions

def condition_bars(regressions):
    """``(experiment, condition, value, half_width)`` rows, whisker = 1.96 SE."""
    rows = []
    for fit in regressions:
        for cond, term in CONDITION_TERMS:
            if term in fit.names:
                c, se = fit.get(term)
                rows.append((fit.experiment, cond, c, Z95 * se))
    return rows


def render_condition_bars(regressions, out_dir, title="Condition effects on daily MAAPE"):
    regressions = list(regressions)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = condition_bars(regressions)
    conds = [c for c, _ in CONDITION_TERMS if any(r[1] == c for r in rows)]
    exps = [f.experiment for f in regressions]
    lo = min([0.0] + [r[2] - r[3] for r in rows])
    hi = max([0.0] + [r[2] + r[3] for r in rows])
    hi = _nice_max(hi) if hi > 0 else 0.1
    lo = -_nice_max(-lo) if lo < 0 else 0.0
    svg = _Svg(title)
    x0, x1, y0, y1 = _axes(svg, lo, hi, "coefficient (rad)")

    def py(v):
        return y0 - (y0 - y1) * (v - lo) / (hi - lo)

    svg.line(x0, py(0), x1, py(0), color="#444")
    group = (x1 - x0) / max(len(conds), 1)
    bar = group * 0.8 / max(len(exps), 1)
    lookup = {(r[0], r[1]): r for r in rows}
    for ci, cond in enumerate(conds):
        gx = x0 + ci * group + group * 0.1
        svg.text(x0 + (ci + 0.5) * group, y0 + 16, cond, anchor="middle", size=10)
        for ei, exp in enumerate(exps):
            r = lookup.get((exp, cond))
            if r is None:
                continue
            _, _, v, hw = r
            bx = gx + ei * bar
            top, bot = (py(v), py(0)) if v >= 0 else (py(0), py(v))
            svg.rect(bx, top, bar * 0.9, bot - top, PALETTE[ei % len(PALETTE)], 0.85)
            mid = bx + bar * 0.45
            svg.line(mid, py(v - hw), mid, py(v + hw), width=1)
            svg.line(mid - bar * 0.2, py(v + hw), mid + bar * 0.2, py(v + hw), width=1)
            svg.line(mid - bar * 0.2, py(v - hw), mid + bar * 0.2, py(v - hw), width=1)
    _legend(svg, exps)
    svg_path, csv_path = out / "conditions.svg", out / "conditions.csv"
    svg_path.write_text(svg.render(), encoding="utf-8")
    _write_csv(csv_path, ["experiment", "condition", "value", "ci_half_width"],
               [[e, c, repr(float(v)), repr(float(h))] for e, c, v, h in rows])
    return svg_path, csv_path


# ------------------------------------------------------------------- timing

def timing_rows(reports):
    rows = []
    for rep in reports:
        rows.append((rep.experiment, "baseline", rep.baseline_per_station))
        rows.append((rep.experiment, "update", rep.update_mean))
        rows.append((rep.experiment, "simulation", rep.simulation_mean))
    return rows


def render_timing(reports, out_dir, title="Training and simulation time (s, log scale)"):
    """Horizontal log-scale bars: baseline training, mean update, mean simulation step."""
    reports = list(reports)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = timing_rows(reports)
    positive = [v for _, _, v in rows if v > 0]
    lo = 10 ** math.floor(math.log10(min(positive))) if positive else 1e-4
    hi = 10 ** math.ceil(math.log10(max(positive))) if positive else 1.0
    if hi <= lo:
        hi = lo * 10
    height = MT + MB + 18 * len(rows) + 10
    svg = _Svg(title, height=max(height, 160))
    x0, x1 = 220, svg.width - 40
    y = MT + 10

    def px(v):
        v = max(v, lo)
        return x0 + (x1 - x0) * (math.log10(v) - math.log10(lo)) / (math.log10(hi) - math.log10(lo))

    kinds = {"baseline": PALETTE[0], "update": PALETTE[1], "simulation": PALETTE[2]}
    for exp, kind, v in rows:
        svg.text(x0 - 6, y + 10, f"{exp} {kind}", anchor="end", size=10)
        svg.rect(x0, y, px(v) - x0, 12, kinds[kind], 0.85)
        y += 18
    decades = int(round(math.log10(hi) - math.log10(lo)))
    for k in range(decades + 1):
        v = lo * 10 ** k
        svg.line(px(v), y, px(v), y + 4)
        svg.text(px(v), y + 16, f"{v:g}", anchor="middle", size=10)
    svg_path, csv_path = out / "timing.svg", out / "timing.csv"
    svg_path.write_text(svg.render(), encoding="utf-8")
    _write_csv(csv_path, ["experiment", "kind", "seconds"],
               [[e, k, repr(float(v))] for e, k, v in rows])
    return svg_path, csv_path


# ---------------------------------------------------------- closed stations

def render_closed_stations(report, out_dir, per_row: int = 4):
    """Small multiples: one panel per closed station, horizon-1 forecasts on its zero days."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_station: dict[str, list] = {}
    for st, d, p1, pm, n in report.rows:
        by_station.setdefault(st, []).append((d, p1, pm, n))
    stations = list(by_station)
    cols = max(1, min(per_row, len(stations)))
    nrows = max(1, math.ceil(len(stations) / cols))
    cw, ch = 180, 130
    svg = _Svg(f"Forecasts on zero-demand days ({report.experiment}); "
               f"share above {report.threshold:g}: {report.nonzero_fraction:.3f}",
               width=max(cw * cols + 40, 420), height=40 + ch * nrows)
    if not stations:
        svg.text(svg.width / 2, 60, "no zero-demand cells in the test range", anchor="middle")
    peak = _nice_max(max((r[2] for r in report.rows), default=1.0))
    for k, st in enumerate(stations):
        gx, gy = 30 + (k % cols) * cw, 36 + (k // cols) * ch
        pts = by_station[st]
        svg.text(gx + (cw - 30) / 2, gy + 10, st, anchor="middle")
        bx0, bx1, by0, by1 = gx, gx + cw - 30, gy + ch - 20, gy + 18
        svg.line(bx0, by0, bx1, by0)
        svg.line(bx0, by0, bx0, by1)
        svg.text(bx0 - 2, by1 + 4, f"{peak:g}", anchor="end", size=9)
        step = (bx1 - bx0) / max(len(pts), 1)
        for j, (_, p1, _, _) in enumerate(pts):
            h = (by0 - by1) * p1 / peak
            svg.rect(bx0 + j * step + 1, by0 - h, max(step - 2, 1), h, PALETTE[1], 0.85)
    svg_path, csv_path = out / "closed_stations.svg", out / "closed_stations.csv"
    svg_path.write_text(svg.render(), encoding="utf-8")
    _write_csv(csv_path, ["experiment", "station", "date", "pred_h1", "pred_mean", "n_forecasts"],
               [[report.experiment, st, d.isoformat(), repr(p1), repr(pm), n]
                for st, d, p1, pm, n in report.rows])
    return svg_path, csv_path


# ------------------------------------------------------------------ summary

@dataclass(frozen=True)
class SummaryRow:
    condition: str
    best: str
    value: float
    half_width: float
    train_seconds: float
    tied: tuple[str, ...]


def summarize(regressions, timings=None) -> list[SummaryRow]:
    """Best cell per condition by point estimate; cells whose 95% interval
    overlaps the best one's are listed as indistinguishable from it."""
    timings = timings or {}
    rows = condition_bars(regressions)
    out = []
    for cond, _ in CONDITION_TERMS:
        cands = sorted((r for r in rows if r[1] == cond), key=lambda r: (r[2], r[0]))
        if not cands:
            continue
        exp, _, v, hw = cands[0]
        tied = tuple(e for e, _, v2, hw2 in cands[1:] if v2 - hw2 <= v + hw)
        t = timings.get(exp)
        out.append(SummaryRow(cond, exp, v, hw, float("nan") if t is None
                              else t.baseline_per_station, tied))
    return out


def render_summary(regressions, timings, out_dir):
    """Writes ``summary.txt`` (fixed width) and ``summary.csv``; returns the text."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = summarize(regressions, timings)
    header = f"{'condition':<16}{'best cell':<24}{'MAAPE effect':>22}{'train s':>12}  tied with"
    lines = [header, "-" * len(header)]
    for r in rows:
        est = f"{r.value:.3f} (+-{r.half_width:.3f})"
        ts = "" if math.isnan(r.train_seconds) else f"{r.train_seconds:.2f}"
        lines.append(f"{r.condition:<16}{r.best:<24}{est:>22}{ts:>12}  {', '.join(r.tied) or '-'}")
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text, encoding="utf-8")
    _write_csv(out / "summary.csv",
               ["condition", "best", "value", "ci_half_width", "train_seconds", "tied"],
               [[r.condition, r.best, repr(r.value), repr(r.half_width), _num(r.train_seconds),
                 ";".join(r.tied)] for r in rows])
    return text
