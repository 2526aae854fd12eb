"""Minimal deterministic SVG line charts.

Writes one standalone vector file per chart: lines with optional +/-1 std
bands, linear axes with five ticks, and a legend. Output bytes depend only on
the input data (floats are formatted with a fixed precision), so re-emission
is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#9467bd",
    "#ff7f0e",
    "#8c564b",
    "#17becf",
    "#7f7f7f",
)

W, H = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 50


@dataclass
class Series:
    name: str
    x: np.ndarray
    mean: np.ndarray
    std: np.ndarray | None = None


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _tick_values(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def line_chart(path: str | Path, title: str, xlabel: str, ylabel: str,
               series: list[Series]) -> None:
    xs = np.concatenate([np.asarray(s.x, dtype=float) for s in series])
    ys = []
    for s in series:
        m = np.asarray(s.mean, dtype=float)
        ys.append(m)
        if s.std is not None:
            ys.extend([m - s.std, m + s.std])
    ys = np.concatenate(ys)
    finite = np.isfinite(ys)
    x_lo, x_hi = float(xs.min()), float(xs.max())
    if finite.any():
        y_lo, y_hi = float(ys[finite].min()), float(ys[finite].max())
    else:
        y_lo, y_hi = 0.0, 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x):
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * (W - MARGIN_L - MARGIN_R)

    def py(y):
        return H - MARGIN_B - (y - y_lo) / (y_hi - y_lo) * (H - MARGIN_T - MARGIN_B)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W/2:.1f}" y="20" text-anchor="middle" font-size="15" '
        f'font-family="sans-serif">{title}</text>',
    ]
    # axes
    out.append(
        f'<line x1="{MARGIN_L}" y1="{H-MARGIN_B}" x2="{W-MARGIN_R}" '
        f'y2="{H-MARGIN_B}" stroke="black"/>'
    )
    out.append(
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" '
        f'y2="{H-MARGIN_B}" stroke="black"/>'
    )
    for tx in _tick_values(x_lo, x_hi):
        out.append(
            f'<text x="{px(tx):.1f}" y="{H-MARGIN_B+18}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">{_fmt(tx)}</text>'
        )
        out.append(
            f'<line x1="{px(tx):.1f}" y1="{H-MARGIN_B}" x2="{px(tx):.1f}" '
            f'y2="{H-MARGIN_B+4}" stroke="black"/>'
        )
    for ty in _tick_values(y_lo, y_hi):
        out.append(
            f'<text x="{MARGIN_L-8}" y="{py(ty)+4:.1f}" text-anchor="end" '
            f'font-size="11" font-family="sans-serif">{_fmt(ty)}</text>'
        )
        out.append(
            f'<line x1="{MARGIN_L-4}" y1="{py(ty):.1f}" x2="{MARGIN_L}" '
            f'y2="{py(ty):.1f}" stroke="black"/>'
        )
    out.append(
        f'<text x="{(MARGIN_L+W-MARGIN_R)/2:.1f}" y="{H-12}" text-anchor="middle" '
        f'font-size="13" font-family="sans-serif">{xlabel}</text>'
    )
    out.append(
        f'<text x="16" y="{(MARGIN_T+H-MARGIN_B)/2:.1f}" text-anchor="middle" '
        f'font-size="13" font-family="sans-serif" '
        f'transform="rotate(-90 16 {(MARGIN_T+H-MARGIN_B)/2:.1f})">{ylabel}</text>'
    )

    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        x = np.asarray(s.x, dtype=float)
        m = np.asarray(s.mean, dtype=float)
        ok = np.isfinite(m)
        if s.std is not None and ok.any():
            sd = np.asarray(s.std, dtype=float)
            upper = [(px(a), py(b)) for a, b in zip(x[ok], (m + sd)[ok])]
            lower = [(px(a), py(b)) for a, b in zip(x[ok][::-1], (m - sd)[ok][::-1])]
            pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in upper + lower)
            out.append(f'<polygon points="{pts}" fill="{color}" opacity="0.15"/>')
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[ok], m[ok]))
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = MARGIN_T + 14 + 16 * i
        out.append(
            f'<line x1="{W-MARGIN_R-150}" y1="{ly}" x2="{W-MARGIN_R-125}" '
            f'y2="{ly}" stroke="{color}" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{W-MARGIN_R-120}" y="{ly+4}" font-size="11" '
            f'font-family="sans-serif">{s.name}</text>'
        )
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
