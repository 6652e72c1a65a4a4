"""Three-panel stationary policy maps on the belief triangle."""
from __future__ import annotations

import sys

import matplotlib.pyplot as plt
from matplotlib.colors import ListedColormap

from figkit.common import ACTIVE_COLOR, ISOLATE_COLOR, figure_main, read_csv, save_figure

HEADER = ["s", "a", "phi", "u"]


def render(paths, out):
    fig, axes = plt.subplots(1, len(paths), figsize=(3.2 * len(paths), 3.2),
                             squeeze=False)
    cmap = ListedColormap([ISOLATE_COLOR, ACTIVE_COLOR])
    for ax, path in zip(axes[0], paths):
        data = read_csv(path, HEADER)
        ax.scatter(data["s"], data["a"], c=data["u"], cmap=cmap, vmin=0, vmax=1,
                   s=4, marker="s", linewidths=0)
        ax.plot([0, 1, 0, 0], [0, 0, 1, 0], color="black", lw=0.8)
        ax.set_xlabel("s")
        ax.set_ylabel("a")
        ax.set_xlim(-0.02, 1.02)
        ax.set_ylim(-0.02, 1.02)
        ax.set_aspect("equal")
        ax.set_title(str(path).rsplit("/", 1)[-1])
    fig.tight_layout()
    save_figure(fig, out)
    plt.close(fig)


def main(argv=None) -> int:
    return figure_main(argv, (1, 3), render,
                       "Policy maps: activity choice over the belief triangle")


if __name__ == "__main__":
    sys.exit(main())
