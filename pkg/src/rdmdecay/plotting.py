"""Log-log SVG plots for spectra and decay envelopes."""
from __future__ import annotations

import io
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


@dataclass
class PlotSeries:
    x: np.ndarray
    y: np.ndarray
    label: str = "data"
    fit: tuple | None = None  # (amplitude, exponent, (x_lo, x_hi))
    predicted: float | None = None
    xlabel: str = "k"
    ylabel: str = "value"
    title: str = ""


def emit_plot(series, style=None):
    """Render one or more series as a standalone SVG document (returned as text).

    Each series is drawn as markers; a fitted power law is drawn over its
    window with a slope annotation, and a predicted slope appears as a guide.
    """
    if isinstance(series, PlotSeries):
        series = [series]
    if not series or any(len(s.x) == 0 for s in series):
        raise ValueError("cannot plot an empty series")
    style = dict(style or {})
    plt.rcParams["svg.hashsalt"] = "rdmdecay"
    fig, ax = plt.subplots(figsize=style.get("figsize", (6, 4.5)))
    for s in series:
        x = np.asarray(s.x, dtype=float)
        y = np.abs(np.asarray(s.y, dtype=float))
        ok = (x > 0) & (y > 0)
        ax.loglog(x[ok], y[ok], ls="none", marker=style.get("marker", "o"),
                  ms=style.get("markersize", 3), label=s.label)
        if s.fit is not None:
            amp, expo, (lo, hi) = s.fit
            xx = np.geomspace(lo, hi, 50)
            ax.loglog(xx, amp * xx ** (-expo), "k-", lw=1.2, label=f"fitted slope {expo:.2f}")
            if s.predicted is not None:
                ax.loglog(xx, amp * lo ** (s.predicted - expo) * xx ** (-s.predicted), "r--",
                          lw=1.0, label=f"predicted slope {s.predicted:.2f}")
        elif s.predicted is not None and ok.any():
            x0, y0 = x[ok][0], y[ok][0]
            xx = np.geomspace(x[ok].min(), x[ok].max(), 50)
            ax.loglog(xx, y0 * (xx / x0) ** (-s.predicted), "r--", lw=1.0,
                      label=f"predicted slope {s.predicted:.2f}")
    ax.set_xlabel(series[0].xlabel)
    ax.set_ylabel(series[0].ylabel)
    if series[0].title:
        ax.set_title(series[0].title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def write_plot(path, series, style=None):
    svg = emit_plot(series, style)
    with open(path, "w") as fh:
        fh.write(svg)
    return path
