"""Static SVG line charts for eyeballing simulated and filtered series."""

from __future__ import annotations

from os import PathLike

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

# fixed id salt and no timestamp keep the SVG output reproducible
_RC = {"svg.hashsalt": "meanrev", "svg.fonttype": "none"}


def line_chart(
    target: str | PathLike,
    x,
    series: dict,
    *,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
) -> None:
    """Write one line per ``series`` entry against the shared ``x`` axis."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(8, 4.5))
        for label, y in series.items():
            ax.plot(x, y, label=label, linewidth=1.0)
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if len(series) > 1 and len(series) <= 10:
            ax.legend()
        fig.tight_layout()
        fig.savefig(target, format="svg", metadata={"Date": None})
        plt.close(fig)


def heatmap(target: str | PathLike, values, x_labels, y_labels, *, title: str = "") -> None:
    """Grid of cell values, used for the parameter sweep."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(10, 4.5))
        im = ax.imshow(values, aspect="auto", origin="lower", cmap="viridis")
        ax.set_xticks(range(len(x_labels)), [f"{v:.3g}" for v in x_labels], rotation=90)
        ax.set_yticks(range(len(y_labels)), [str(v) for v in y_labels])
        ax.set_xlabel("sigma_o")
        ax.set_ylabel("t_b")
        ax.set_title(title)
        fig.colorbar(im, ax=ax)
        fig.tight_layout()
        fig.savefig(target, format="svg", metadata={"Date": None})
        plt.close(fig)
