"""SVG figures for Monte Carlo reports, drawn with matplotlib (Agg backend)."""
from __future__ import annotations

import io

import numpy as np


def line_plot(series, title="", xlabel="", ylabel="", logx=False, logy=False, step=False) -> str:
    """Render ``{name: (x, y, style)}`` as SVG text.

    ``style`` is ``"line"`` or ``"marker"``; the third element may be omitted.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    try:
        for name, (xs, ys, *rest) in series.items():
            x, y = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
            if rest and rest[0] == "marker":
                ax.plot(x, y, "o", mfc="none", label=str(name))
            elif step:
                ax.step(x, y, where="post", label=str(name))
            else:
                ax.plot(x, y, label=str(name))
        ax.set(title=title, xlabel=xlabel, ylabel=ylabel)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        if series:
            ax.legend(fontsize="x-small")
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None}, bbox_inches="tight")
    finally:
        plt.close(fig)
    return buf.getvalue()
