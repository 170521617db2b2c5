"""Simulate the default market for 50,000 days and print its stylized facts.

    python3 demos/reference_run.py [days]
"""

import sys

import numpy as np

from fundeco.config import SimConfig
from fundeco.engine import run
from fundeco.stats import run_facts

days = int(sys.argv[1]) if len(sys.argv) > 1 else 50_000
cfg = SimConfig().with_updates(run={"t_max_days": days, "master_seed": 0})
rec = run(cfg)
print(f"{rec.days} days, final price {rec.price[-1]:.2f}, final value {rec.fundamental_value[-1]:.2f}")
print(f"worst clearing residual {np.max(rec.residual):.1e}, mean short interest {100 * np.mean(rec.short_interest):.2f}%")

w = rec.style_wealth[:, :3]
g = (w[-1] / w[0]) ** (252 / rec.days) - 1
print("yearly geometric return by style: " + ", ".join(f"{s} {100 * x:.2f}%" for s, x in zip(("NT", "VI", "TF"), g)))
print("terminal wealth shares: " + ", ".join(f"{s} {x:.3f}" for s, x in zip(("NT", "VI", "TF"), rec.wealth_shares[-1, :3])))

for name, chk in run_facts(rec).checks.items():
    verdict = {True: "pass", False: "FAIL", None: "info"}[chk.passed]
    stat = chk.statistic if not isinstance(chk.statistic, float) else round(chk.statistic, 4)
    print(f"  {verdict:4s} {name:26s} {stat}")
