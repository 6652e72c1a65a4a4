"""Belief trajectory drawn on the (S, A, R) probability simplex."""
from __future__ import annotations

import sys

import matplotlib.pyplot as plt
import numpy as np

from figkit.common import figure_main, read_csv, save_figure

HEADER = ["t", "S", "A", "R", "u", "a_bar"]

# barycentric corners: S bottom-left, R bottom-right, A top
_SQ3 = np.sqrt(3.0) / 2.0


def _project(s, a, r):
    x = r + 0.5 * a
    y = _SQ3 * a
    return x, y


def render(paths, out):
    fig, ax = plt.subplots(figsize=(4.0, 3.6))
    ax.plot([0, 1, 0.5, 0], [0, 0, _SQ3, 0], color="black", lw=0.8)
    for label, (cx, cy) in (("S", (-0.04, -0.04)), ("R", (1.02, -0.04)),
                            ("A", (0.5, _SQ3 + 0.03))):
        ax.text(cx, cy, label, ha="center", va="center")
    for k, path in enumerate(paths):
        data = read_csv(path, HEADER)
        x, y = _project(data["S"], data["A"], data["R"])
        ax.plot(x, y, color=f"C{k}", lw=1.2)
        ax.plot(x[:1], y[:1], marker="o", color=f"C{k}", ms=4)
        ax.plot(x[-1:], y[-1:], marker="x", color=f"C{k}", ms=5)
    ax.set_aspect("equal")
    ax.axis("off")
    fig.tight_layout()
    save_figure(fig, out)
    plt.close(fig)


def main(argv=None) -> int:
    return figure_main(argv, (1, 8), render,
                       "Belief trajectory on the (S, A, R) simplex")


if __name__ == "__main__":
    sys.exit(main())
