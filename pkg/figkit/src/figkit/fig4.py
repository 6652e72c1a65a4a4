"""Switching threshold and belief barrier as functions of the activity ratio."""
from __future__ import annotations

import sys

import matplotlib.pyplot as plt

from figkit.common import figure_main, read_csv, save_figure

HEADER = ["ratio", "beta_bar", "a_thresh", "a_bar"]


def render(paths, out):
    data = read_csv(paths[0], HEADER)
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    order = data["ratio"].argsort()
    ax.plot(data["ratio"][order], data["a_thresh"][order], "o-", color="#1f78b4",
            label="a_thresh")
    ax.plot(data["ratio"][order], data["a_bar"][order], "s--", color="#e31a1c",
            label="a_bar")
    ax.set_xlabel("beta / beta_crit")
    ax.set_ylabel("asymptomatic belief")
    ax.legend(frameon=False)
    fig.tight_layout()
    save_figure(fig, out)
    plt.close(fig)


def main(argv=None) -> int:
    return figure_main(argv, 1, render,
                       "Activity threshold and belief barrier vs. infected activity")


if __name__ == "__main__":
    sys.exit(main())
