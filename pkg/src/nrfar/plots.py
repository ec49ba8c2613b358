"""Deterministic SVG curves of balanced accuracy against SNR."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "nrfar"  # stable element ids across runs


def _x_positions(snrs: list[str]) -> tuple[list[float], list[str]]:
    finite = sorted((float(s) for s in snrs if s != "clean"), reverse=True)
    xs, labels = [], []
    if "clean" in snrs:
        top = finite[0] + 5.0 if finite else 0.0
        xs.append(top)
        labels.append("clean")
    xs += finite
    labels += [f"{v:g}" for v in finite]
    return xs, labels


def plot_curves(cells: list[dict], source: str, path, title: str | None = None) -> Path:
    """One SVG per noise source: mean ± std balanced accuracy per method against SNR."""
    rows = [c for c in cells if c["source"] == source]
    snrs = sorted({c["snr"] for c in rows}, key=lambda s: float("inf") if s == "clean" else float(s),
                  reverse=True)
    xs, labels = _x_positions(snrs)
    pos = dict(zip(labels, xs))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for method in sorted({c["method"] for c in rows}):
        pts = sorted((pos[c["snr"] if c["snr"] == "clean" else f"{float(c['snr']):g}"], c["mean"], c["std"])
                     for c in rows if c["method"] == method)
        ax.errorbar([p[0] for p in pts], [p[1] for p in pts], yerr=[p[2] for p in pts],
                    marker="o", capsize=3, label=method)
    ax.set_xticks(xs)
    ax.set_xticklabels(labels)
    ax.invert_xaxis()
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("balanced accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.set_title(title or f"noise: {source}")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower left")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
