"""A small simplex sweep: how initial wealth shares shape the terminal ecology.

    python3 demos/small_sweep.py [points] [years]
"""

import sys

import numpy as np

from fundeco.config import SimConfig
from fundeco.engine import default_workers
from fundeco.experiments import run_sweep, sample_simplex

n = int(sys.argv[1]) if len(sys.argv) > 1 else 12
years = float(sys.argv[2]) if len(sys.argv) > 2 else 10
res = run_sweep(sample_simplex(n, 0), 2, years, SimConfig(), workers=default_workers())

print("   initial (NT VI TF)      terminal mean (NT VI TF)   runs ok/failed")
for i in range(n):
    p, m = res.points[i], res.mean[i]
    term = "   (all runs failed)   " if np.isnan(m).all() else " ".join(f"{x:.3f}" for x in m)
    print(f"  {' '.join(f'{x:.3f}' for x in p)}    {term}      {res.completed[i]}/{res.failed[i]}")
print(res.summary())
