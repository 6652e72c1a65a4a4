"""Risk-reward diagram of a susceptible agent: activity pays below the line."""
from __future__ import annotations

import sys

import matplotlib.pyplot as plt

from figkit.common import ACTIVE_COLOR, ISOLATE_COLOR, figure_main, read_csv, save_figure

HEADER = ["alpha", "phi_a_boundary", "model_alpha", "model_phi_a"]


def render(paths, out):
    data = read_csv(paths[0], HEADER)
    fig, ax = plt.subplots(figsize=(4.2, 3.4))
    al, bd = data["alpha"], data["phi_a_boundary"]
    top = max(bd.max(), data["model_phi_a"][0]) * 1.15
    ax.plot(al, bd, color="black", lw=1.2, label="risk = reward")
    ax.fill_between(al, bd, top, color=ISOLATE_COLOR, alpha=0.25)
    ax.fill_between(al, 0.0, bd, color=ACTIVE_COLOR, alpha=0.25)
    ax.plot(data["model_alpha"][:1], data["model_phi_a"][:1], marker="*",
            color="black", ms=10)
    ax.set_xlim(al.min(), al.max())
    ax.set_ylim(0.0, top)
    ax.set_xlabel("economic reward per unit time")
    ax.set_ylabel("potential health cost")
    ax.legend(frameon=False, loc="upper left")
    fig.tight_layout()
    save_figure(fig, out)
    plt.close(fig)


def main(argv=None) -> int:
    return figure_main(argv, 1, render,
                       "Risk-reward tradeoff of a susceptible agent")


if __name__ == "__main__":
    sys.exit(main())
