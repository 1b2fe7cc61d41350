"""Matplotlib renderings of BLER curve and latency CSV files (written to PNG)."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _rows(path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def plot_bler_csv(paths, out_path, title: str | None = None) -> Path:
    """Semilog BLER vs Eb/N0 with Wilson error bars; one line per CSV and user."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for path in paths:
        rows = _rows(path)
        if not rows:
            continue
        users = sorted({r["user"] for r in rows}, key=lambda u: (u == "all", u))
        for user in users:
            sel = [r for r in rows if r["user"] == user]
            x = np.array([float(r["ebn0_db"]) for r in sel])
            y = np.array([float(r["bler"]) for r in sel])
            lo = np.array([float(r["ci_low"]) for r in sel])
            hi = np.array([float(r["ci_high"]) for r in sel])
            r0 = sel[0]
            label = f"{r0['scheme']} L={r0['L']}" + (f" user {user}" if len(users) > 1 else "")
            mask = y > 0  # zero-error points cannot be drawn on a log axis
            if not mask.any():
                continue
            yerr = np.vstack([y[mask] - lo[mask], hi[mask] - y[mask]])
            ax.errorbar(x[mask], y[mask], yerr=yerr, marker="o", ms=3,
                        capsize=2, label=label, linestyle="--" if user == "all" else "-")
    ax.set_yscale("log")
    ax.set_xlabel("Eb/N0 (dB)")
    ax.set_ylabel("BLER")
    ax.grid(True, which="both", alpha=0.3)
    if title:
        ax.set_title(title)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=7)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_latency_csv(path, out_path) -> Path:
    """Median per-message decode time against the dominant operation count."""
    rows = _rows(path)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for scheme in sorted({r["scheme"] for r in rows}):
        sel = [r for r in rows if r["scheme"] == scheme and r["L"] == "1"]
        if not sel:
            continue
        ops = np.array([float(r["ops"]) for r in sel])
        med = np.array([float(r["median_us"]) for r in sel])
        p95 = np.array([float(r["p95_us"]) for r in sel])
        order = np.argsort(ops)
        ax.errorbar(ops[order], med[order], yerr=np.vstack([np.zeros_like(med), (p95 - med)[order]]), marker="o",
                    capsize=2, label=scheme)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("dominant multiplies per message")
    ax.set_ylabel("decode time per message (us)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
