#!/usr/bin/env python3
"""Render an aggregate-CSV sweep (mean sample success vs worker count m) with
its Wilson interval band.

Consumes the aggregate CSV schema emitted by the popdyn harness.  Output is
a pure function of the CSV bytes: fixed style, fixed metadata, no timestamps.
"""

import argparse
import csv
import re
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

EXPECTED_HEADER = ["group_key", "trials", "mean_sample_success",
                   "sd_sample_success", "wilson_lo", "wilson_hi", "conv_rate",
                   "mean_steps_converged"]
PNG_METADATA = {"Software": "popdyn-plots"}


class PlotError(Exception):
    pass


def load_sweep(path):
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
    if not rows:
        raise PlotError(f"{path}: no data rows")
    points = []
    for r in rows:
        m = re.search(r"\bm=(\d+)", r["group_key"])
        if not m:
            raise PlotError(f"{path}: group_key without m=: {r['group_key']!r}")
        points.append((int(m.group(1)), float(r["mean_sample_success"]),
                       float(r["wilson_lo"]), float(r["wilson_hi"])))
    points.sort()
    return points


def render(in_path, out_path):
    points = load_sweep(in_path)
    ms = [p[0] for p in points]
    mean = [p[1] for p in points]
    lo = [p[2] for p in points]
    hi = [p[3] for p in points]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.fill_between(ms, lo, hi, alpha=0.25, color="tab:blue",
                    label="Wilson 95% interval")
    ax.plot(ms, mean, marker="o", color="tab:blue", label="mean success")
    ax.set_xscale("log")
    ax.set_ylim(0.0, 1.0)
    ax.set_xlabel("worker count m")
    ax.set_ylabel("sample success rate")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=100, metadata=PNG_METADATA)
    plt.close(fig)


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="Success-rate-vs-m sweep renderer for aggregate CSVs")
    parser.add_argument("--in", dest="in_path", required=True,
                        help="aggregate CSV path")
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    try:
        render(args.in_path, args.out)
    except PlotError as exc:
        print(f"plot_sweep: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
