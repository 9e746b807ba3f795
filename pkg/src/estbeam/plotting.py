"""Matplotlib figures rendered next to the delimited data files.

All functions draw on the non-interactive Agg backend and write a PNG.
PNG bytes may vary between matplotlib versions; the CSV and ``.dat``
files are the reproducible record.
"""

from __future__ import annotations

import math
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import LosPartition  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.8),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata={"Software": None})
    plt.close(fig)


def plot_contour(rows: List[Dict], partition: Optional[LosPartition], path) -> None:
    """Global contour with the visible samples and subsection midpoints."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x = np.array([r["x_global_m"] for r in rows])
        y = np.array([r["y_global_m"] for r in rows])
        vis = np.array([bool(r["visible"]) for r in rows])
        ax.plot(np.append(x, x[0]), np.append(y, y[0]), color="0.6", lw=1.0, label="contour")
        ax.plot(x[vis], y[vis], ".", ms=2.0, color="C0", label="line of sight")
        if partition is not None:
            p = partition.p
            ax.plot(p[:, 0], p[:, 1], "o", ms=4.0, color="C3", label="subsection midpoints")
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel("x (m)")
        ax.set_ylabel("y (m)")
        ax.legend(loc="best")
        _save(fig, path)


def plot_beampattern(patterns: Sequence[Tuple[str, np.ndarray]], grid_rad: np.ndarray,
                     partition: Optional[LosPartition], path) -> None:
    """Transmit beampatterns in dB with the subsection bearings marked."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        deg = np.rad2deg(grid_rad)
        for label, p in patterns:
            ax.plot(deg, 10.0 * np.log10(np.maximum(p, 1e-12)), lw=1.2, label=label)
        if partition is not None:
            for phi in partition.phi:
                ax.axvline(math.degrees(phi), color="0.7", lw=0.6, ls=":")
        ax.set_xlabel("angle (deg)")
        ax.set_ylabel("a^H R a (dB)")
        ax.set_xlim(-90, 90)
        ax.legend(loc="best")
        _save(fig, path)


def plot_sweep(rows: List[Dict], axis: str, path) -> None:
    """CRB in dB against the swept quantity, one line per variant."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        variants = []
        for r in rows:
            if r["variant"] not in variants:
                variants.append(r["variant"])
        for v in variants:
            pts = [(float(r["value"]), r.get("crb_db")) for r in rows
                   if r["variant"] == v and r.get("crb_db") is not None]
            if pts:
                xs, ys = zip(*pts)
                ax.plot(xs, ys, "o-", ms=3.5, label=v)
        ax.set_xlabel(axis)
        ax.set_ylabel("CRB(phi_o) (dB rad^2)")
        ax.legend(loc="best")
        _save(fig, path)


def plot_errors(rows: List[Dict], summary: Dict, path) -> None:
    """Histogram of direction errors with the bound's standard deviation marked."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        err = np.array([r["error_rad"] for r in rows])
        ax.hist(np.rad2deg(err), bins=min(40, max(5, len(err) // 5)), color="C0", alpha=0.8)
        sd = math.degrees(math.sqrt(summary["crb_rad2"]))
        for s in (-sd, sd):
            ax.axvline(s, color="C3", ls="--", lw=1.0)
        ax.set_xlabel("phi_hat - phi_o (deg)")
        ax.set_ylabel("runs")
        ax.set_title(f"MSE / CRB = {summary['mse_over_crb']:.3g}")
        _save(fig, path)
