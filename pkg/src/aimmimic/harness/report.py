"""CSV reports and the SVG line charts rendered from them.

CSV files start with ``# key=value`` provenance lines. Charts are a pure
function of the series CSV, so an SVG can always be regenerated from the
table next to it.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence
from xml.sax.saxutils import escape

from ..detector import CONDITIONS, TRAJECTORY_PROPERTIES, EvasionReport
from ..profile import DESCRIPTIONS

DELTA_COLUMNS = ("player", "property", "description") + CONDITIONS
SUMMARY_COLUMNS = (
    "player", "condition", "matches", "rule_flagged", "shift_flagged", "flagged", "a2_change_pct", "improvement",
)  # fmt: skip
SERIES_COLUMNS = ("player", "property", "match", "change_pct")
FLAG_COLUMNS = ("player", "condition", "match", "rule_flags", "shift_flags")


class ReportError(ValueError):
    pass


def fmt(x: Optional[float], digits: int = 6) -> str:
    """Fixed-precision rendering; missing values become empty cells."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.{digits}f}"


def _write(path: Path, columns: Sequence[str], rows: Iterable[Mapping], provenance: Mapping) -> None:
    buf = io.StringIO()
    for k in sorted(provenance):
        buf.write(f"# {k}={provenance[k]}\n")
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({c: row.get(c, "") for c in columns})
    path.write_text(buf.getvalue(), encoding="utf-8")


def read_csv(path: Path, columns: Sequence[str]) -> tuple[dict, list[dict]]:
    """Provenance and rows of a report CSV; raises ReportError when malformed."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ReportError(f"{path}: {exc.strerror}") from exc
    prov, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            k, sep, v = line[1:].strip().partition("=")
            if not sep:
                raise ReportError(f"{path}: bad provenance line {line!r}")
            prov[k] = v
        else:
            body.append(line)
    rows = list(csv.DictReader(body))
    if not body or tuple(csv.reader(body[:1]).__next__()) != tuple(columns):
        raise ReportError(f"{path}: expected columns {', '.join(columns)}")
    return prov, rows


def write_reports(out: Path, reports: Mapping[str, EvasionReport], provenance: Mapping) -> dict[str, Path]:
    """Write the delta table, the flag summary, per-match flags and the
    adaptive trajectories for every player."""
    out.mkdir(parents=True, exist_ok=True)
    deltas, summary, series, flags = [], [], [], []
    for player in sorted(reports):
        rep = reports[player]
        for row in rep.deltas():
            deltas.append({
                "player": player, "property": row["property"], "description": row["description"],
                **{c: fmt(row.get(c), 3) for c in CONDITIONS},
            })  # fmt: skip
        for name in CONDITIONS:
            res = rep.conditions[name]
            a2 = next(r[name] for r in rep.deltas() if r["property"] == "a2")
            summary.append({
                "player": player, "condition": name, "matches": len(res.matches),
                "rule_flagged": res.flagged("rules"), "shift_flagged": res.flagged("shift"),
                "flagged": res.flagged("any"), "a2_change_pct": fmt(a2, 3),
                "improvement": fmt(rep.improvement, 6) if name == "adaptive" else "",
            })  # fmt: skip
            for m in res.matches:
                flags.append({
                    "player": player, "condition": name, "match": m.match_id,
                    "rule_flags": " ".join(m.rule_flags), "shift_flags": " ".join(m.shift_flags),
                })  # fmt: skip
        for prop, values in rep.trajectories().items():
            for i, v in enumerate(values):
                series.append({"player": player, "property": prop, "match": i + 1, "change_pct": fmt(v, 6)})
    paths = {
        "deltas": out / "deltas.csv",
        "summary": out / "summary.csv",
        "flags": out / "flags.csv",
        "series": out / "series.csv",
    }
    _write(paths["deltas"], DELTA_COLUMNS, deltas, provenance)
    _write(paths["summary"], SUMMARY_COLUMNS, summary, provenance)
    _write(paths["flags"], FLAG_COLUMNS, flags, provenance)
    _write(paths["series"], SERIES_COLUMNS, series, provenance)
    return paths


def load_series(path: Path) -> tuple[dict, dict[str, dict[str, list[tuple[int, Optional[float]]]]]]:
    """Provenance and ``{property: {player: [(match, value), ...]}}``."""
    prov, rows = read_csv(path, SERIES_COLUMNS)
    out: dict = defaultdict(lambda: defaultdict(list))
    for i, r in enumerate(rows, start=2):
        try:
            match = int(r["match"])
            value = float(r["change_pct"]) if r["change_pct"] else None
        except (TypeError, ValueError) as exc:
            raise ReportError(f"{path}: bad row {i}: {r}") from exc
        out[r["property"]][r["player"]].append((match, value))
    return prov, {p: dict(v) for p, v in out.items()}


# --------------------------------------------------------------------------
# SVG

WIDTH, HEIGHT = 640, 360
MARGIN = {"left": 64, "right": 112, "top": 40, "bottom": 48}
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.floor(lo / step) * step
    ticks, t = [], start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


def line_chart(
    title: str,
    series: Mapping[str, Sequence[tuple[int, Optional[float]]]],
    provenance: Mapping,
    x_label: str = "match",
    y_label: str = "change vs genuine (%)",
) -> str:
    """Deterministic SVG line chart; an empty ``series`` gives bare axes."""
    pts = [(x, y) for s in series.values() for x, y in s if y is not None]
    xs = [x for x, _ in pts] or [1]
    ys = [y for _, y in pts] or [0.0]
    x_lo, x_hi = min(xs), max(max(xs), min(xs) + 1)
    yt = _nice_ticks(min(min(ys), 0.0), max(max(ys), 0.0))
    y_lo, y_hi = yt[0], yt[-1]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        return MARGIN["top"] + (y_hi - y) / (y_hi - y_lo) * ph

    o = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        "<!-- " + " ".join(f"{k}={provenance[k]}" for k in sorted(provenance)) + " -->",
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
    ]
    left, right, top, bottom = MARGIN["left"], WIDTH - MARGIN["right"], MARGIN["top"], HEIGHT - MARGIN["bottom"]
    for t in yt:
        y = sy(t)
        o.append(f'<line x1="{left}" y1="{y:.2f}" x2="{right}" y2="{y:.2f}" stroke="#dddddd" stroke-width="1"/>')
        o.append(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="11">{t:g}</text>')
    step = max(1, math.ceil((x_hi - x_lo) / 15))
    for x in range(int(x_lo), int(x_hi) + 1, step):
        px = sx(x)
        o.append(f'<line x1="{px:.2f}" y1="{bottom}" x2="{px:.2f}" y2="{bottom + 4}" stroke="black" stroke-width="1"/>')
        o.append(f'<text x="{px:.2f}" y="{bottom + 17}" text-anchor="middle" font-family="sans-serif" font-size="11">{x}</text>')
    o.append(f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black" stroke-width="1"/>')
    o.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black" stroke-width="1"/>')
    if y_lo < 0 < y_hi:
        o.append(f'<line x1="{left}" y1="{sy(0):.2f}" x2="{right}" y2="{sy(0):.2f}" stroke="#888888" stroke-dasharray="4 3"/>')
    o.append(f'<text x="{(left + right) / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(x_label)}</text>')
    o.append(
        f'<text x="16" y="{(top + bottom) / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {(top + bottom) / 2:.1f})">{escape(y_label)}</text>'
    )
    for i, name in enumerate(sorted(series)):
        colour = PALETTE[i % len(PALETTE)]
        run = [(x, y) for x, y in sorted(series[name]) if y is not None]
        if run:
            coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in run)
            o.append(f'<polyline fill="none" stroke="{colour}" stroke-width="2" points="{coords}"/>')
            for x, y in run:
                o.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2.5" fill="{colour}"/>')
        ly = top + 14 + 18 * i
        o.append(f'<line x1="{right + 12}" y1="{ly - 4}" x2="{right + 32}" y2="{ly - 4}" stroke="{colour}" stroke-width="2"/>')
        o.append(f'<text x="{right + 38}" y="{ly}" font-family="sans-serif" font-size="12">{escape(name)}</text>')
    o.append("</svg>")
    return "\n".join(o) + "\n"


def render_charts(series_csv: Path, out: Path, properties: Sequence[str] = TRAJECTORY_PROPERTIES) -> list[Path]:
    """One chart per tracked property, with a line per player."""
    prov, data = load_series(series_csv)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for prop in properties:
        title = f"{prop}: {DESCRIPTIONS.get(prop, prop)}"
        path = out / f"trajectory_{prop}.svg"
        path.write_text(line_chart(title, data.get(prop, {}), prov), encoding="utf-8")
        paths.append(path)
    return paths


def summary_table(summary_csv: Path) -> str:
    """Plain-text version of the flag summary for the terminal."""
    _, rows = read_csv(summary_csv, SUMMARY_COLUMNS)
    head = f"{'player':<8}{'condition':<10}{'matches':>8}{'rules':>7}{'shift':>7}{'a2 %':>9}"
    lines = [head]
    for r in rows:
        lines.append(
            f"{r['player']:<8}{r['condition']:<10}{r['matches']:>8}{r['rule_flagged']:>7}"
            f"{r['shift_flagged']:>7}{r['a2_change_pct']:>9}"
        )
    return "\n".join(lines)
