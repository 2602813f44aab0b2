"""PNG figures next to the CSV tables of a run (Agg backend, no display)."""
import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    cols = {h: [] for h in head}
    for r in body:
        for h, v in zip(head, r):
            try:
                cols[h].append(float(v))
            except ValueError:
                cols[h].append(float("nan"))
    return cols


def plot_csv(path, x=None, ys=None, logy=False, title=None):
    """Line plot of a CSV table; returns the PNG path."""
    cols = read_csv(path)
    names = list(cols)
    x = x or names[0]
    ys = ys or [n for n in names if n != x]
    fig, ax = plt.subplots(figsize=(6, 4))
    for y in ys:
        vals = cols[y]
        if logy:
            vals = [abs(v) if v == v else v for v in vals]
        ax.plot(cols[x], vals, marker="." if len(vals) < 40 else None, label=y)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(x)
    ax.legend()
    ax.set_title(title or os.path.basename(path))
    fig.tight_layout()
    out = os.path.splitext(path)[0] + ".png"
    fig.savefig(out, dpi=100)
    plt.close(fig)
    return out
