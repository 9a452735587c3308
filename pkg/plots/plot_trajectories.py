#!/usr/bin/env python3
"""Render a grid of trajectory CSVs (one panel per file) to a single image.

Consumes the trajectory CSV schema emitted by the popdyn harness and nothing
else; panels are ordered by filename.  Output is a pure function of the CSV
bytes: fixed style, fixed metadata, no timestamps.
"""

import argparse
import csv
import glob as globmod
import math
import re
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

EXPECTED_HEADER = ["step", "x", "y", "b", "x_hat2", "y_hat2", "P2",
                   "sample_error", "phase", "stage", "cum_productive",
                   "cum_blank", "cum_leaks"]
PNG_METADATA = {"Software": "popdyn-plots"}


class PlotError(Exception):
    pass


def load_trajectory(path):
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise PlotError(f"{path}: empty file") from None
            for col, expected in zip(header, EXPECTED_HEADER):
                if col != expected:
                    raise PlotError(f"{path}: expected column {expected!r}, "
                                    f"found {col!r}")
            if len(header) != len(EXPECTED_HEADER):
                raise PlotError(f"{path}: expected {len(EXPECTED_HEADER)} "
                                f"columns, found {len(header)}")
            rows = [dict(zip(header, line)) for line in reader if line]
    except OSError as exc:
        raise PlotError(f"{path}: {exc}") from exc
    if len(rows) < 2:
        raise PlotError(f"{path}: too few data rows ({len(rows)})")
    steps = [int(r["step"]) for r in rows]
    series = {k: [int(r[k]) for r in rows] for k in ("x", "y", "b")}
    return steps, series


def panel_title(path):
    m = re.search(r"m(\d+)_b\d+_beta([0-9.eE+-]+)", path)
    if m:
        return f"m=n={m.group(1)}, beta={m.group(2)}"
    return path.rsplit("/", 1)[-1]


def render(paths, out_path, columns=4):
    if not paths:
        raise PlotError("no input CSVs matched")
    data = [(p, load_trajectory(p)) for p in sorted(paths)]
    n = len(data)
    cols = min(columns, n)
    rows = math.ceil(n / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(4 * cols, 3 * rows),
                             squeeze=False)
    for ax in axes.flat[n:]:
        ax.axis("off")
    for ax, (path, (steps, series)) in zip(axes.flat, data):
        for name, color in (("x", "tab:blue"), ("y", "tab:red"),
                            ("b", "tab:gray")):
            ax.plot(steps, series[name], color=color, label=name, lw=1.2)
        ax.set_title(panel_title(path), fontsize=9)
        ax.set_xlabel("step", fontsize=8)
        ax.set_ylabel("count", fontsize=8)
        ax.tick_params(labelsize=7)
    axes.flat[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=100, metadata=PNG_METADATA)
    plt.close(fig)


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="Trajectory grid renderer for harness CSV output")
    parser.add_argument("--glob", required=True,
                        help="glob pattern for trajectory CSVs")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--columns", type=int, default=4)
    args = parser.parse_args(argv)
    try:
        render(globmod.glob(args.glob), args.out, columns=args.columns)
    except PlotError as exc:
        print(f"plot_trajectories: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
