#!/usr/bin/env python
"""Figures from the CSV files written by ``chemokin study-eps`` and ``chemokin run``."""
from __future__ import annotations

import argparse
import csv
from collections import defaultdict
from pathlib import Path
from typing import Dict, List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from utils.log import logger

__all__ = ["read_csv", "plot_study", "plot_diagnostics"]

DIAGNOSTIC_PANELS = ["mass", "pbar_inf", "S_inf", "x_moment", "m_moment", "env_pbar_margin"]


def read_csv(path: str | Path) -> Dict[str, List[float]]:
    columns = defaultdict(list)
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            for key, value in row.items():
                columns[key].append(float(value) if value not in ("True", "False") else float(value == "True"))
    return dict(columns)


def plot_study(study_csv: str | Path, output: str | Path) -> Path:
    """W1 width and L1 gap to the limit model against t, one line per eps."""
    data = read_csv(study_csv)
    by_eps = defaultdict(lambda: defaultdict(list))
    for i, eps in enumerate(data["eps"]):
        for key in ("t", "w1", "l1_gap"):
            by_eps[eps][key].append(data[key][i])

    fig, (ax_w, ax_g) = plt.subplots(1, 2, figsize=(10, 4))
    for eps in sorted(by_eps, reverse=True):
        series = by_eps[eps]
        ax_w.plot(series["t"], series["w1"], marker="o", label=f"eps = {eps:g}")
        ax_g.plot(series["t"], series["l1_gap"], marker="o", label=f"eps = {eps:g}")
    ax_w.set_xlabel("t")
    ax_w.set_ylabel("W1 to the adapted state")
    ax_g.set_xlabel("t")
    ax_g.set_ylabel("L1 gap to the limit model")
    ax_g.set_yscale("symlog", linthresh=1e-6)
    ax_w.legend()
    fig.tight_layout()
    fig.savefig(output)
    plt.close(fig)
    logger.info(f"saved {output}")
    return Path(output)


def plot_diagnostics(diagnostics_csv: str | Path, output: str | Path) -> Path:
    data = read_csv(diagnostics_csv)
    fig, axes = plt.subplots(2, 3, figsize=(12, 6), sharex=True)
    for ax, name in zip(axes.ravel(), DIAGNOSTIC_PANELS):
        ax.plot(data["t"], data[name], marker=".")
        ax.set_title(name)
    for ax in axes[-1]:
        ax.set_xlabel("t")
    fig.tight_layout()
    fig.savefig(output)
    plt.close(fig)
    logger.info(f"saved {output}")
    return Path(output)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Plot a study or diagnostics CSV.")
    parser.add_argument("csv", type=str)
    parser.add_argument("-o", "--output", type=str, default=None)
    args = parser.parse_args()

    path = Path(args.csv)
    output = args.output or str(path.with_suffix(".png"))
    header = path.read_text().split("\n", 1)[0]
    if header.startswith("eps,"):
        plot_study(path, output)
    else:
        plot_diagnostics(path, output)
