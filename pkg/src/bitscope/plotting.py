"""Matplotlib figures for the report styles (written to files, never shown)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
    "svg.hashsalt": "bitscope",
}
COLORS = {"w": "#4c72b0", "b": "#dd8452", "a": "#55a868"}
LABELS = {"w": "weights", "b": "biases", "a": "activations"}


def _save(fig, path):
    # fixed metadata keeps the files byte-stable between runs
    meta = {"Software": None} if str(path).endswith(".png") else {"Date": None}
    fig.savefig(path, metadata=meta)
    plt.close(fig)


def plot_ranges(rows: list, path) -> None:
    """Horizontal [min, max] bars per part and category (Table 1 style)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 0.6 + 0.55 * len(rows)))
        h = 0.25
        for k, row in enumerate(rows):
            for j, cat in enumerate(("w", "b", "a")):
                lo, hi = row.get(f"{cat}_min"), row.get(f"{cat}_max")
                if lo is None:
                    continue
                y = k + (j - 1) * h
                ax.barh(y, hi - lo, left=lo, height=h * 0.9, color=COLORS[cat],
                        label=LABELS[cat] if k == 0 else None)
        ax.axvline(0, color="0.5", lw=0.6)
        ax.set_yticks(range(len(rows)))
        ax.set_yticklabels([r["part"] for r in rows])
        ax.invert_yaxis()
        ax.set_xlabel("value")
        ax.set_title("Value range per part")
        ax.legend(frameon=False, fontsize=8, loc="upper left", bbox_to_anchor=(1.0, 1.0))
        _save(fig, path)


def plot_accuracy(rows: list, parts: list, path, title: str) -> None:
    """Relative accuracy of each configuration row."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 0.8 + 0.32 * max(len(rows), 1)))
        labels = [" ".join(r["configs"][p] for p in parts) for r in rows]
        vals = [r["relative_pct"] for r in rows]
        colors = ["#c44e52" if r.get("selected") else "#8c8c8c" for r in rows]
        ax.barh(range(len(rows)), vals, color=colors, height=0.7)
        for k, v in enumerate(vals):
            ax.text(v, k, f" {v:.2f}%", va="center", fontsize=7)
        ax.set_yticks(range(len(rows)))
        ax.set_yticklabels(labels, fontsize=7, family="monospace")
        ax.invert_yaxis()
        lo = min(vals + [100.0])
        ax.set_xlim(max(0.0, lo - 5.0), max(vals + [100.0]) + 3.0)
        ax.set_xlabel("relative accuracy (%)")
        ax.set_title(title)
        _save(fig, path)
