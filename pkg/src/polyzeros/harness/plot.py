"""Standalone SVG figures from result CSVs."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

from ..gaussian_oracle import kac_edge_profile

PLOT_KINDS = ("intensity", "roots", "edge")
_REQUIRED = {"intensity": {"x", "value"}, "roots": {"re", "im"}, "edge": {"a", "value"}}
W, H, PAD = 640, 480, 56


class SchemaMismatch(ValueError):
    """The CSV does not carry the columns the requested plot needs."""


def _read(path: Path, kind: str) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = set(reader.fieldnames or ())
        rows = list(reader)
    missing = _REQUIRED[kind] - cols
    if missing or not rows:
        why = f"missing columns {sorted(missing)}" if missing else "no data rows"
        raise SchemaMismatch(f"{path} cannot make the {kind} plot: {why}")
    return rows


def _f(v) -> float:
    return float(v) if v not in (None, "") else math.nan


class _Frame:
    def __init__(self, xlo, xhi, ylo, yhi, square=False):
        if xhi <= xlo:
            xlo, xhi = xlo - 1, xhi + 1
        if yhi <= ylo:
            ylo, yhi = ylo - 1, yhi + 1
        self.xlo, self.xhi, self.ylo, self.yhi = xlo, xhi, ylo, yhi
        self.w, self.h = W - 2 * PAD, H - 2 * PAD
        if square:
            # equal scale on both axes so circles stay round
            s = min(self.w / (xhi - xlo), self.h / (yhi - ylo))
            self.w, self.h = s * (xhi - xlo), s * (yhi - ylo)

    def x(self, v):
        return PAD + (v - self.xlo) / (self.xhi - self.xlo) * self.w

    def y(self, v):
        return PAD + self.h - (v - self.ylo) / (self.yhi - self.ylo) * self.h


def _ticks(lo, hi, k=5):
    step = 10 ** math.floor(math.log10((hi - lo) / k))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (step * m) <= k:
            step *= m
            break
    t = math.ceil(lo / step) * step
    out = []
    while t <= hi + 1e-12 * step:
        out.append(round(t, 12))
        t += step
    return out


def _axes(fr: _Frame, title: str, xlabel: str, ylabel: str) -> list[str]:
    x0, y0 = PAD, PAD + fr.h
    out = [f'<rect x="{x0}" y="{PAD}" width="{fr.w:.1f}" height="{fr.h:.1f}" fill="none" stroke="#444"/>']
    for t in _ticks(fr.xlo, fr.xhi):
        px = fr.x(t)
        out.append(f'<line x1="{px:.1f}" y1="{y0}" x2="{px:.1f}" y2="{y0 + 5}" stroke="#444"/>')
        out.append(f'<text x="{px:.1f}" y="{y0 + 18}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(fr.ylo, fr.yhi):
        py = fr.y(t)
        out.append(f'<line x1="{x0 - 5}" y1="{py:.1f}" x2="{x0}" y2="{py:.1f}" stroke="#444"/>')
        out.append(f'<text x="{x0 - 8}" y="{py + 4:.1f}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{W / 2}" y="{PAD / 2}" text-anchor="middle" font-size="15">{escape(title)}</text>')
    out.append(f'<text x="{PAD + fr.w / 2:.1f}" y="{y0 + 40}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text transform="translate(16 {PAD + fr.h / 2:.1f}) rotate(-90)" '
               f'text-anchor="middle">{escape(ylabel)}</text>')
    return out


def _polyline(fr, xs, ys, color, width=1.5) -> str:
    pts = " ".join(f"{fr.x(a):.2f},{fr.y(b):.2f}" for a, b in zip(xs, ys) if math.isfinite(b))
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"/>'


def _svg(body: list[str]) -> str:
    return ("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">\n'
            f'<rect width="{W}" height="{H}" fill="white"/>\n' + "\n".join(body) + "\n</svg>\n")


def _intensity(rows) -> str:
    xs = [_f(r["x"]) for r in rows]
    ys = [_f(r["value"]) for r in rows]
    mc = [(_f(r.get("x")), _f(r.get("mc_value")), _f(r.get("mc_stderr"))) for r in rows
          if r.get("mc_value") not in (None, "")]
    tops = ys + [m + 2 * s for _, m, s in mc]
    fr = _Frame(min(xs), max(xs), 0.0, 1.1 * max(v for v in tops if math.isfinite(v)))
    scheme = rows[0].get("scheme", "")
    body = _axes(fr, f"real zero intensity {scheme} n={rows[0].get('n', '')}", "x", "ρ(x)")
    body.append(_polyline(fr, xs, ys, "#1f5fa8"))
    if scheme == "elliptic_rescaled" and rows[0].get("n"):
        n = float(rows[0]["n"])
        grid = [fr.xlo + (fr.xhi - fr.xlo) * i / 200 for i in range(201)]
        ref = [1 / (math.pi * (1 + g * g / n)) for g in grid]
        body.append(_polyline(fr, grid, ref, "#c0392b", 1.0).replace("/>", ' stroke-dasharray="5 3"/>'))
    for x, m, s in mc:
        body.append(f'<line x1="{fr.x(x):.2f}" y1="{fr.y(m - s):.2f}" x2="{fr.x(x):.2f}" '
                    f'y2="{fr.y(m + s):.2f}" stroke="#222"/>')
        body.append(f'<circle cx="{fr.x(x):.2f}" cy="{fr.y(m):.2f}" r="3" fill="#222"/>')
    return _svg(body)


def _roots(rows) -> str:
    re = [_f(r["re"]) for r in rows]
    im = [_f(r["im"]) for r in rows]
    scheme = rows[0].get("scheme", "")
    n = _f(rows[0].get("n"))
    lim = max(max(map(abs, re)), max(map(abs, im)))
    if scheme == "flat" and math.isfinite(n):
        lim = max(lim, math.sqrt(n))
    lim *= 1.05
    fr = _Frame(-lim, lim, -lim, lim, square=True)
    body = _axes(fr, f"zeros {scheme} n={rows[0].get('n', '')}", "Re z", "Im z")
    if scheme == "flat" and math.isfinite(n):
        rad = math.sqrt(n) * (fr.x(1) - fr.x(0))
        body.append(f'<circle cx="{fr.x(0):.2f}" cy="{fr.y(0):.2f}" r="{rad:.2f}" fill="none" '
                    f'stroke="#c0392b" stroke-dasharray="5 3"/>')
    for a, b in zip(re, im):
        body.append(f'<circle cx="{fr.x(a):.2f}" cy="{fr.y(b):.2f}" r="1.6" fill="#1f5fa8"/>')
    return _svg(body)


def _edge(rows) -> str:
    a = [_f(r["a"]) for r in rows]
    v = [_f(r["value"]) for r in rows]
    grid = [min(a) + (max(a) - min(a)) * i / 200 for i in range(201)]
    ref = [kac_edge_profile(g) for g in grid]
    fr = _Frame(min(a), max(a), 0.0, 1.1 * max(v + ref))
    body = _axes(fr, "Kac edge profile", "a", "F(a)")
    body.append(_polyline(fr, grid, ref, "#c0392b", 1.0))
    for x, y in zip(a, v):
        body.append(f'<circle cx="{fr.x(x):.2f}" cy="{fr.y(y):.2f}" r="2.5" fill="#1f5fa8"/>')
    return _svg(body)


def emit_plot(result_csv: str | Path, kind: str, out: str | Path | None = None) -> Path:
    """Render ``result_csv`` as an SVG of the given ``kind``; returns the output path."""
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    src = Path(result_csv)
    rows = _read(src, kind)
    svg = {"intensity": _intensity, "roots": _roots, "edge": _edge}[kind](rows)
    dst = Path(out) if out is not None else src.with_suffix(".svg")
    dst.parent.mkdir(parents=True, exist_ok=True)
    dst.write_text(svg)
    return dst
