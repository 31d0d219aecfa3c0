"""Optional PNG line charts for bench output (requires matplotlib)."""

from __future__ import annotations

import csv
from pathlib import Path


def render_bench_chart(bench_csv: str | Path, out_png: str | Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(bench_csv, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    steps_rows = [r for r in rows if r["mode"] == "sweep_steps"]
    reps_rows = [r for r in rows if r["mode"] == "sweep_reps"]

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, data, xkey, title in (
        (axes[0], steps_rows, "steps", "steps (5 repetitions)"),
        (axes[1], reps_rows, "repetitions", "repetitions (10 steps)"),
    ):
        xs = [int(r[xkey]) for r in data]
        ax.plot(xs, [float(r["f1"]) for r in data], "o-", color="tab:blue", label="F1")
        ax.set_xlabel(xkey)
        ax.set_ylabel("F1", color="tab:blue")
        twin = ax.twinx()
        twin.plot(xs, [1.0 / float(r["wall_time_s"]) for r in data], "s--",
                  color="tab:red", label="img/s")
        twin.set_ylabel("images / s", color="tab:red")
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
