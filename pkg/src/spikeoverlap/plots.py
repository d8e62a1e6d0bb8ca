"""Figure rendering: spectrum scatters and convergence summaries.

SVG output is kept byte-stable by pinning the hash salt and dropping the
creation date, so repeated runs of the same config produce identical files.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "spikeoverlap"

import matplotlib.pyplot as plt
import numpy as np

_SVG_META = {"Date": None}


def render_spectrum(
    path: str | Path,
    eigenvalues: np.ndarray,
    epsilon_band: float,
    spikes,
    title: str | None = None,
) -> None:
    """Scatter the spectrum with the unit circle, outlier band, spike marks."""
    ev = np.asarray(eigenvalues, dtype=np.complex128)
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    theta = np.linspace(0.0, 2.0 * math.pi, 512)
    ax.plot(np.cos(theta), np.sin(theta), color="black", lw=0.8, label="unit circle")
    radius = 1.0 + epsilon_band
    ax.plot(
        radius * np.cos(theta),
        radius * np.sin(theta),
        color="crimson",
        lw=0.8,
        ls="--",
        label=f"|z| = 1 + {epsilon_band:.3g}",
    )
    ax.scatter(
        ev.real, ev.imag, s=6, color="#30507a", alpha=0.6, linewidths=0,
        label="eigenvalues",
    )
    spike_values = np.asarray([complex(mu) for mu in spikes])
    ax.scatter(
        spike_values.real, spike_values.imag, marker="x", s=60, color="crimson",
        label="spikes", zorder=3,
    )
    ax.set_aspect("equal")
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata=_SVG_META)
    plt.close(fig)


def render_convergence(path: str | Path, table) -> None:
    """Mean overlap against dimension per spike, with the limit dashed in,
    plus the median spectral distance when the oracle ran."""
    spike_indices = sorted({row.spike_index for row in table.rows})
    have_oracle = any(math.isfinite(row.median_hausdorff) for row in table.rows)
    n_axes = 2 if have_oracle else 1
    fig, axes = plt.subplots(n_axes, 1, figsize=(6.4, 3.2 * n_axes), squeeze=False)
    ax = axes[0][0]
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    plotted_any = False
    for pos, index in enumerate(spike_indices):
        rows = [r for r in table.rows if r.spike_index == index]
        # a size where every trial failed carries nan means; drop those points
        kept = [r for r in rows if math.isfinite(r.mean_overlap)]
        ns = [r.n for r in kept]
        means = [r.mean_overlap for r in kept]
        stds = [r.std_overlap if math.isfinite(r.std_overlap) else 0.0 for r in kept]
        color = colors[pos % len(colors)]
        mu = rows[0].mu
        if kept:
            plotted_any = True
            ax.errorbar(
                ns, means, yerr=stds, marker="o", ms=4, capsize=3, color=color,
                label=f"spike {mu:.3g}",
            )
        ax.axhline(rows[0].limit, color=color, ls="--", lw=0.8)
    ax.set_xlabel("n")
    ax.set_ylabel("mean squared overlap")
    if plotted_any:
        ax.set_xscale("log")
        ax.legend(fontsize=8)
    if have_oracle:
        ax2 = axes[1][0]
        seen = set()
        ns, medians = [], []
        for row in table.rows:
            if row.n not in seen and math.isfinite(row.median_hausdorff):
                seen.add(row.n)
                ns.append(row.n)
                medians.append(row.median_hausdorff)
        ax2.plot(ns, medians, marker="s", ms=4, color="#7a3050")
        ax2.set_xlabel("n")
        ax2.set_ylabel("median spectral distance")
        ax2.set_xscale("log")
        if medians and min(medians) > 0.0:
            ax2.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, metadata=_SVG_META)
    plt.close(fig)
