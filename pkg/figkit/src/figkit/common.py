"""Shared plumbing: strict CSV reading, argument parsing, deterministic output."""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

EXIT_OK = 0
EXIT_RENDER = 1
EXIT_SCHEMA = 2

# colors follow the policy-map convention: purple = isolate, green = active
ISOLATE_COLOR = "#6a3d9a"
ACTIVE_COLOR = "#33a02c"

RC = {
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 9,
    "axes.titlesize": 10,
    "svg.hashsalt": "figkit",
}


class SchemaError(Exception):
    pass


def read_csv(path: str | Path, expected_header: list[str]) -> dict[str, np.ndarray]:
    """Load a CSV whose header must match the producer's schema exactly."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if header != expected_header:
            for k, (got, want) in enumerate(zip(header, expected_header)):
                if got != want:
                    raise SchemaError(f"{path}: column {k} is {got!r}, expected {want!r}")
            raise SchemaError(f"{path}: header {header} != expected {expected_header}")
        rows = [row for row in reader if row]
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    try:
        data = np.array(rows, dtype=float)
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric cell ({exc})") from None
    return {name: data[:, k] for k, name in enumerate(expected_header)}


def save_figure(fig, out: str | Path):
    # constant metadata so repeated renders are byte-identical
    fig.savefig(out, format="png", metadata={"Software": "figkit"})


def figure_main(argv, n_inputs, render, description: str) -> int:
    """Common entry point: parse --in/--out, read inputs, render, report.

    ``n_inputs`` is an exact count or (min, max); ``render(paths, out)`` does
    the drawing and may raise SchemaError for input problems.
    """
    parser = argparse.ArgumentParser(description=description)
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        metavar="CSV", help="input CSV file(s)")
    parser.add_argument("--out", required=True, metavar="IMG", help="output image path")
    args = parser.parse_args(argv)

    lo, hi = n_inputs if isinstance(n_inputs, tuple) else (n_inputs, n_inputs)
    if not lo <= len(args.inputs) <= hi:
        want = str(lo) if lo == hi else f"{lo}..{hi}"
        print(f"error: expected {want} input file(s), got {len(args.inputs)}",
              file=sys.stderr)
        return EXIT_SCHEMA

    import matplotlib.pyplot as plt

    try:
        with plt.rc_context(RC):
            render(args.inputs, args.out)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except Exception as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return EXIT_RENDER
    return EXIT_OK
