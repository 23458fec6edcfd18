#!/usr/bin/env python3
"""Plots the CSV files written by `laneintent eval` into PNGs next to them."""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

MODES = ["LK", "P", "LC"]


def plot_lateral(d: Path) -> None:
    h = pd.read_csv(d / "lateral_hist.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    for mode in MODES:
        m = h[h["mode"] == mode]
        if m.empty:
            continue
        total = m["count"].sum()
        ax.step(m["bin_left"], m["count"] / total, where="post", label=mode)
    ax.set_xlabel("lateral deviation from lane centre [m]")
    ax.set_ylabel("fraction of ticks")
    ax.legend()
    fig.tight_layout()
    fig.savefig(d / "lateral_hist.png", dpi=120)
    plt.close(fig)


def plot_transitions(d: Path) -> None:
    t = pd.read_csv(d / "transitions.csv")
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    for ax, col in zip(axes, ["ttc", "thw"]):
        for name, g in t.groupby("transition"):
            ax.hist(g[col], bins=40, alpha=0.6, label=name)
        ax.set_xlabel(col.upper())
        ax.legend()
    fig.tight_layout()
    fig.savefig(d / "transitions.png", dpi=120)
    plt.close(fig)


def plot_timing(d: Path) -> None:
    t = pd.read_csv(d / "timing.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.boxplot([t["t_p"], t["dt_p"], t["dt_lc"]])
    ax.set_xticks([1, 2, 3], ["T_P", "dT_P", "dT_LC"])
    ax.set_ylabel("s")
    fig.tight_layout()
    fig.savefig(d / "timing.png", dpi=120)
    plt.close(fig)


def plot_confusion(d: Path) -> None:
    c = pd.read_csv(d / "confusion.csv")
    c["driver"] = c["driver"].fillna("")
    for (driver, algo), g in c.groupby(["driver", "algorithm"]):
        g = g.set_index("true_mode").reindex(MODES)
        fig, ax = plt.subplots(figsize=(4, 3.5))
        ax.imshow(g[MODES].values, vmin=0, vmax=1, cmap="Blues")
        for i in range(3):
            for j in range(3):
                ax.text(j, i, f"{g[MODES].values[i, j]:.2f}", ha="center", va="center")
        ax.set_xticks(range(3), MODES)
        ax.set_yticks(range(3), MODES)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        name = f"confusion_{algo}" + (f"_{driver}" if driver else "")
        ax.set_title(name)
        fig.tight_layout()
        fig.savefig(d / f"{name}.png", dpi=120)
        plt.close(fig)


def plot_probability(d: Path) -> None:
    p = d / "prob_trace.csv"
    if not p.exists():
        return
    t = pd.read_csv(p)
    fig, ax = plt.subplots(figsize=(8, 3.5))
    for mode in MODES:
        ax.plot(t["time"], t[f"p_{mode}"], label=mode)
    codes = t["true_mode"].map({m: i / 2 for i, m in enumerate(MODES)})
    ax.plot(t["time"], codes, "k--", lw=0.8, label="true (0/0.5/1)")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("probability")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(d / "prob_trace.png", dpi=120)
    plt.close(fig)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("report_dir", type=Path)
    args = ap.parse_args()
    d = args.report_dir
    plot_confusion(d)
    for f, fn in [("lateral_hist.csv", plot_lateral), ("transitions.csv", plot_transitions),
                  ("timing.csv", plot_timing)]:
        if (d / f).exists():
            fn(d)
    plot_probability(d)


if __name__ == "__main__":
    main()
