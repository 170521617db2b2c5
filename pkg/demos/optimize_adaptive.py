"""Search a static trading strategy for a small adaptive fund and compare it with the base styles.

    python3 demos/optimize_adaptive.py [seed] [budget]
"""

import sys

import numpy as np

from fundeco import optimize as opt
from fundeco.config import SimConfig

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
budget = int(sys.argv[2]) if len(sys.argv) > 2 else 60
env = opt.Environment(SimConfig(), days=2520).with_seed(seed)

cash = opt.evaluate_schedule(np.zeros(env.days), env)
print(f"all-cash multiplier {cash.measure:.4f}")
for style, m in cash.base_measures.items():
    print(f"  {style} aggregate multiplier {m:.4f}")

res = opt.optimize_trading(env, budget, "static", "wealth_multiplier", seed=seed)
print(f"best after {budget} evaluations: {res.best_measure:.4f}")
print(f"  candidate {res.best}")
