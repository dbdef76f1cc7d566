"""
Sweeping the attack grid and exporting plot data
================================================

Runs a reduced strategy x alpha x beta x seed grid, writes the three report
files (runs.csv, losses.csv, rounds.csv), and derives the per-metric plot
tables of median curves. Each plot table row is one (strategy, beta, alpha)
cell; the alpha=0 row anchors every curve at the clean baseline. If
matplotlib is importable the curves are also rendered to PNG, but the CSVs
are the real product and the demo works without it.
"""

import csv
from pathlib import Path

from poisonbench import (GenConfig, GridConfig, RunConfig, emit_plot_data,
                         run_grid, write_reports)

data = GenConfig(seed=3, class_count=4, per_class_train=60, per_class_test=30)
base = RunConfig(dataset=data, epochs=6, lr=0.01, batch_size=32, data_seed=3)

# 2 strategies x 2 alphas x 2 betas x 2 seeds = 16 attack runs + 2 base runs.
grid = GridConfig(base=base, alphas=(0.10, 0.20), betas=(1, 6),
                  strategies=("local", "global"), seeds=(1, 2))

reports = run_grid(grid, progress=lambda r: print(
    f"  {r.run_id}: fscore {r.fscore:.4f}, alc {r.alc:+.4f}"))

out = Path("demo_out")
write_reports(reports, out)
emit_plot_data(reports, out)
print(f"\nwrote {sorted(p.name for p in out.iterdir())} to {out}/")

for name in ("plot_alc.csv", "plot_aip.csv", "plot_pdm.csv"):
    print(f"\n{name}:")
    print((out / name).read_text().rstrip())

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("\nmatplotlib not installed, skipping PNG rendering")
else:
    for name, label in (("alc", "avg loss change"), ("aip", "mean confidence"),
                        ("pdm", "F1 degradation")):
        with (out / f"plot_{name}.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        fig, ax = plt.subplots(figsize=(5, 3.5))
        curves = sorted({(r["strategy"], r["beta"]) for r in rows})
        for strategy, beta in curves:
            points = [(float(r["alpha"]), float(r["median"])) for r in rows
                      if (r["strategy"], r["beta"]) == (strategy, beta)]
            ax.plot(*zip(*points), marker="o", label=f"{strategy}, beta={beta}")
        ax.set_xlabel("alpha (poisoned fraction per round)")
        ax.set_ylabel(label)
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(out / f"plot_{name}.png", dpi=120)
        plt.close(fig)
    print(f"\nrendered plot_{{alc,aip,pdm}}.png to {out}/")
