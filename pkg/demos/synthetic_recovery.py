"""Effect recovery against the agent-based ground truth: run a slice of the
27-cell synthetic grid and report treatment effect accuracy per cell.

The full grid with bootstrap CIs is the acceptance-gate setting
(`epiloop synthetic-eval`); this demo runs three cells without CIs so it
finishes in about a minute.

Run: python demos/synthetic_recovery.py
"""

from epiloop.calibration import FitConfig
from epiloop.synthetic import default_grid, grid_summary, run_experiment

grid = default_grid()
# one cell per epidemic regime, all at mid timing / mid strength
names = {f"r0={r0}_day={day}_cut=0.55"
         for r0, day in [(2.0, 29), (2.4, 24), (2.8, 20)]}
cells = [exp for exp in grid if exp.name in names]

config = FitConfig(seed=0, optimizer="lbfgs", max_iters=200)
rows = []
for exp in cells:
    row = run_experiment(exp, config)
    rows.append(row)
    truth = row["truth"]["cases_averted"]
    est = row["estimate"]["cases_averted"]
    print(f"{row['name']:24s} truth={truth:9.1f} est={est:9.1f} "
          f"TEA={row['tea']['cases_averted']:.3f}")

summary = grid_summary(rows)
print(f"\nmedian TEA (cases averted): "
      f"{summary['median_tea_cases_averted']:.3f}")
