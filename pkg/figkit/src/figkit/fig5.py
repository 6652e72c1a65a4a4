"""Evolution of the asymptomatic belief of an active agent."""
from __future__ import annotations

import sys

import matplotlib.pyplot as plt

from figkit.common import figure_main, read_csv, save_figure

HEADER = ["t", "S", "A", "R", "u", "a_bar"]


def render(paths, out):
    fig, ax = plt.subplots(figsize=(4.6, 3.0))
    for k, path in enumerate(paths):
        data = read_csv(path, HEADER)
        color = f"C{k}"
        ax.plot(data["t"], data["A"], color=color, label=f"A_t ({k})")
        ax.axhline(data["a_bar"][0], color=color, ls="--", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("asymptomatic belief")
    ax.legend(frameon=False)
    fig.tight_layout()
    save_figure(fig, out)
    plt.close(fig)


def main(argv=None) -> int:
    return figure_main(argv, (1, 8), render,
                       "Asymptomatic belief of an always-active agent, with barrier")


if __name__ == "__main__":
    sys.exit(main())
