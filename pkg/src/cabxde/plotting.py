"""Prediction-vs-actual line charts written as SVG."""
from __future__ import annotations

from datetime import date

import matplotlib

matplotlib.use("Agg")
import matplotlib.dates as mdates  # noqa: E402
import matplotlib.pyplot as plt  # noqa: E402


def write_svg(path, dates: list[date], actual, series: dict, title: str = ""):
    # fixed hash salt and no Date metadata keep the file byte-stable
    with matplotlib.rc_context({"svg.hashsalt": "cabxde", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(10, 4.5))
        ax.plot(dates, actual, color="black", linewidth=1.6, label="actual")
        for name, values in series.items():
            ax.plot(dates, values, linewidth=1.0, label=name)
        ax.set_title(title)
        ax.set_ylabel("close")
        ax.xaxis.set_major_formatter(mdates.DateFormatter("%Y-%m-%d"))
        fig.autofmt_xdate()
        ax.legend(loc="best", fontsize="small")
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
