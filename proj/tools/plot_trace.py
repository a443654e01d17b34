#!/usr/bin/env python3
"""ASCII plot of an annealing trace CSV (iteration,current_q,best_q,temperature)."""

import argparse
import csv


def load(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return ([float(r["current_q"]) for r in rows],
            [float(r["best_q"]) for r in rows],
            [float(r["temperature"]) for r in rows])


def plot(current, best, width, height):
    lo = min(current)
    hi = max(best)
    span = (hi - lo) or 1.0
    n = len(best)
    grid = [[" "] * width for _ in range(height)]

    def put(series, mark):
        for col in range(width):
            i = min(n - 1, col * n // width)
            row = int((series[i] - lo) / span * (height - 1))
            grid[height - 1 - row][col] = mark

    put(current, ".")
    put(best, "#")  # best_q drawn on top
    for r, line in enumerate(grid):
        label = hi - span * r / (height - 1)
        print(f"{label:10.4f} |{''.join(line)}")
    print(" " * 11 + "+" + "-" * width)
    print(" " * 12 + f"iterations 1..{n}   # best_q   . current_q")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("trace", help="trace_tickN.csv written by mvopt run")
    ap.add_argument("--width", type=int, default=72)
    ap.add_argument("--height", type=int, default=20)
    args = ap.parse_args()

    current, best, temp = load(args.trace)
    if not best:
        raise SystemExit("empty trace")
    plot(current, best, args.width, args.height)
    print(f"final best_q={best[-1]:.6g}  T {temp[0]:.3g} -> {temp[-1]:.3g}  "
          f"rows={len(best)}")


if __name__ == "__main__":
    main()
