"""Static figures for sweep and calibration output.

Uses the object-oriented matplotlib API with an Agg canvas so nothing touches
pyplot global state or needs a display.
"""

from __future__ import annotations

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

_GOLDEN = (5**0.5 - 1) / 2


def _new_figure(width=7.0):
    fig = Figure(figsize=(width, width * _GOLDEN))
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(1, 1, 1)


def plot_sweep(columns: dict, path, title: str | None = None) -> None:
    """Premium versus contract term: TP1/TP2 as lines, every ``IP_*`` column with markers."""
    fig, ax = _new_figure()
    terms = columns["T"]
    ax.plot(terms, columns["TP1"], color="0.4", linestyle="--", label="TP1")
    ax.plot(terms, columns["TP2"], color="black", label="TP2")
    markers = "os^vDx+"
    for i, name in enumerate(k for k in columns if k.startswith("IP_")):
        ax.plot(terms, columns[name], marker=markers[i % len(markers)], markersize=3,
                linewidth=0.8, label=name.replace("IP_", "IP "))
    ax.set_xlabel("term of contract (years)")
    ax.set_ylabel("single premium")
    ax.set_xlim(min(terms), max(terms))
    ax.legend(frameon=False, fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)


def plot_fit(terms, target, fitted, path, label="IP fit") -> None:
    """Target and fitted premium curves with the residuals underneath."""
    fig = Figure(figsize=(7.0, 7.0 * _GOLDEN * 1.4))
    FigureCanvasAgg(fig)
    top = fig.add_subplot(2, 1, 1)
    bottom = fig.add_subplot(2, 1, 2, sharex=top)
    top.plot(terms, target, color="black", label="target")
    top.plot(terms, fitted, marker="o", markersize=3, linewidth=0.8, label=label)
    top.set_ylabel("single premium")
    top.legend(frameon=False, fontsize=8)
    bottom.axhline(0.0, color="0.6", linewidth=0.6)
    bottom.plot(terms, [f - t for f, t in zip(fitted, target)], marker=".", linewidth=0.8)
    bottom.set_xlabel("term of contract (years)")
    bottom.set_ylabel("residual")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
