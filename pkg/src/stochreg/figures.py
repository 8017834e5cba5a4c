"""Figure rendering: each plot is a pure function of its CSV.

The CSV's embedded config carries the figure style (theory lines, span bars
or mean markers for the Monte Carlo results, y quantity).  Rendering uses a
fixed SVG hash salt and no timestamps, so regenerating a plot from the same
CSV yields identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "stochreg"

import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first
import numpy as np  # noqa: E402

from .experiments import read_csv  # noqa: E402

__all__ = ["render_figure"]

_COLORS = ["tab:blue", "tab:red", "tab:green", "tab:purple", "tab:orange"]

_XLABELS = {"c": "c = N/p", "inv_sigma2": "1/sigma^2"}


def _series(rows, key):
    return np.array([row[key] for row in rows])


def render_figure(csv_path, out_path):
    """Render the sweep/simulate CSV at csv_path into a vector plot."""
    meta, header, rows = read_csv(csv_path)
    config = meta.get("config", {})
    style = config.get("style", "span")
    ylabel = config.get("ylabel", "MMSE")
    vary = config.get("vary", "c")
    theory_key = "ymmse" if ylabel.upper() == "YMMSE" else "mmse_total"
    emp_prefix = "vamp_ymmse" if ylabel.upper() == "YMMSE" else "vamp_mse"

    groups = {}
    for row in rows:
        groups.setdefault(row["spectrum_id"], []).append(row)

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for color, (spectrum_id, grp) in zip(_COLORS, sorted(groups.items())):
        x = _series(grp, "param")
        order = np.argsort(x)
        x = x[order]
        theory = _series(grp, theory_key)[order]
        ax.plot(x, theory, "-", color=color, label=f"theory  {spectrum_id}")
        if f"{emp_prefix}_mean" in header:
            mean = _series(grp, f"{emp_prefix}_mean")[order]
            if style == "span":
                lo = mean - _series(grp, f"{emp_prefix}_min")[order]
                hi = _series(grp, f"{emp_prefix}_max")[order] - mean
                ax.errorbar(x, mean, yerr=np.vstack((lo, hi)), fmt="none",
                            ecolor=color, elinewidth=1.2, capsize=3,
                            label=f"VAMP span  {spectrum_id}")
            else:
                ax.plot(x, mean, "+", color=color, markersize=9,
                        markeredgewidth=1.6, label=f"VAMP  {spectrum_id}")
        if "exact_mse_mean" in header and ylabel.upper() != "YMMSE":
            exact = _series(grp, "exact_mse_mean")[order]
            if np.any(np.isfinite(exact)):
                ax.plot(x, exact, "o", color=color, markersize=4,
                        fillstyle="none", label=f"exact posterior  {spectrum_id}")
        if "exact_ymmse_mean" in header and ylabel.upper() == "YMMSE":
            exact = _series(grp, "exact_ymmse_mean")[order]
            if np.any(np.isfinite(exact)):
                ax.plot(x, exact, "o", color=color, markersize=4,
                        fillstyle="none", label=f"exact posterior  {spectrum_id}")

    ax.set_xlabel(_XLABELS.get(vary, vary))
    ax.set_ylabel(ylabel)
    if config.get("title"):
        ax.set_title(config["title"])
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, metadata=_clean_metadata(out_path))
    plt.close(fig)
    return out_path


def _clean_metadata(out_path):
    name = str(out_path)
    if name.endswith(".svg"):
        return {"Date": None}
    if name.endswith(".pdf"):
        return {"CreationDate": None}
    return None
