"""Dependency-free SVG line charts.

Hand-rolled rather than pulling in a plotting stack: the harness only needs
simple, deterministic line panels (same input, same bytes) that diff cleanly
in version control.  Output is SVG 1.1 with axis ticks, a legend built from
the series names, and circle markers so single-point series stay visible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 62, 16, 34, 46
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#17becf", "#7f7f7f")


@dataclass(frozen=True)
class Series:
    name: str
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if len(x) != len(y):
            raise ContractError(
                f"series {self.name!r}: x has {len(x)} points, y has {len(y)}"
            )
        if len(x) == 0:
            raise ContractError(f"series {self.name!r} is empty")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _limits(values: np.ndarray) -> tuple[float, float]:
    finite = values[np.isfinite(values)]
    if len(finite) == 0:
        return -1.0, 1.0
    lo, hi = float(finite.min()), float(finite.max())
    if lo == hi:  # degenerate span: pad symmetrically
        pad = 1.0 if lo == 0.0 else abs(lo) * 0.5
        return lo - pad, hi + pad
    return lo, hi


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def emit_plot(
    series: list[Series],
    path,
    xlabel: str = "",
    ylabel: str = "",
    title: str = "",
) -> None:
    """Write a line chart; byte-identical output for identical input."""
    if not series:
        raise ContractError("emit_plot needs at least one series")
    all_x = np.concatenate([s.x for s in series])
    all_y = np.concatenate([s.y for s in series])
    x0, x1 = _limits(all_x)
    y0, y1 = _limits(all_y)

    def sx(v: float) -> float:
        return MARGIN_L + (v - x0) / (x1 - x0) * (WIDTH - MARGIN_L - MARGIN_R)

    def sy(v: float) -> float:
        return HEIGHT - MARGIN_B - (v - y0) / (y1 - y0) * (HEIGHT - MARGIN_T - MARGIN_B)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    axis_color = "#333333"
    x_axis_y = HEIGHT - MARGIN_B
    parts.append(
        f'<line x1="{MARGIN_L}" y1="{x_axis_y}" x2="{WIDTH - MARGIN_R}" '
        f'y2="{x_axis_y}" stroke="{axis_color}" stroke-width="1"/>'
    )
    parts.append(
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" '
        f'y2="{x_axis_y}" stroke="{axis_color}" stroke-width="1"/>'
    )
    for tv in _ticks(x0, x1):
        px = sx(tv)
        parts.append(
            f'<line x1="{_fmt(px)}" y1="{x_axis_y}" x2="{_fmt(px)}" '
            f'y2="{x_axis_y + 5}" stroke="{axis_color}" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(px)}" y="{x_axis_y + 18}" font-size="11" '
            f'text-anchor="middle" fill="{axis_color}">{_fmt(tv)}</text>'
        )
    for tv in _ticks(y0, y1):
        py = sy(tv)
        parts.append(
            f'<line x1="{MARGIN_L - 5}" y1="{_fmt(py)}" x2="{MARGIN_L}" '
            f'y2="{_fmt(py)}" stroke="{axis_color}" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{MARGIN_L - 8}" y="{_fmt(py + 4)}" font-size="11" '
            f'text-anchor="end" fill="{axis_color}">{_fmt(tv)}</text>'
        )
    if xlabel:
        parts.append(
            f'<text x="{(MARGIN_L + WIDTH - MARGIN_R) / 2:.6g}" y="{HEIGHT - 10}" '
            f'font-size="13" text-anchor="middle" fill="{axis_color}">{_escape(xlabel)}</text>'
        )
    if ylabel:
        cy = (MARGIN_T + x_axis_y) / 2
        parts.append(
            f'<text x="16" y="{_fmt(cy)}" font-size="13" text-anchor="middle" '
            f'fill="{axis_color}" transform="rotate(-90 16 {_fmt(cy)})">{_escape(ylabel)}</text>'
        )
    if title:
        parts.append(
            f'<text x="{WIDTH / 2:.6g}" y="20" font-size="14" '
            f'text-anchor="middle" fill="{axis_color}">{_escape(title)}</text>'
        )

    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        finite = np.isfinite(s.x) & np.isfinite(s.y)
        pts = [(sx(xi), sy(yi)) for xi, yi in zip(s.x[finite], s.y[finite])]
        if len(pts) >= 2:
            coords = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in pts)
            parts.append(
                f'<polyline points="{coords}" fill="none" stroke="{color}" '
                f'stroke-width="1.5"/>'
            )
        for px, py in pts:
            parts.append(
                f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="3" fill="{color}"/>'
            )
        ly = MARGIN_T + 14 * i
        parts.append(
            f'<line x1="{WIDTH - MARGIN_R - 120}" y1="{ly}" '
            f'x2="{WIDTH - MARGIN_R - 100}" y2="{ly}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{WIDTH - MARGIN_R - 95}" y="{ly + 4}" font-size="11" '
            f'fill="{axis_color}">{_escape(s.name)}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    )


def plot_trajectory(records, path, fields=("L_pred", "H", "F", "G")) -> None:
    """One panel with the named step-record scalars against time."""
    ts = np.array([r.t for r in records], dtype=float)
    series = [
        Series(name, ts, np.array([getattr(r, name) for r in records], dtype=float))
        for name in fields
    ]
    emit_plot(series, path, xlabel="step", ylabel="value", title="training diagnostics")


def plot_density(grid, path, name="rho") -> None:
    emit_plot(
        [Series(name, grid.centers, grid.rho)],
        path, xlabel="theta", ylabel="density",
    )
