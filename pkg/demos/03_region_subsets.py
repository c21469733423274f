"""
How much does each region subset leak?
======================================

Sample the per-iteration trace distribution for a few hand-picked page
subsets of the ladder and compare their cardinality and worst-case bias.
"""

import numpy as np

from otalab.config import load_config
from otalab.evaluator import classify, estimate_pmf

base = load_config("configs/ladder.json").with_(channel="pagetrace")
labels = base.rmap.labels

subsets = {
    "marker only": [0],
    "iter + add reduce:1": [0, 9],
    "iter + dbl csub:0,2": [0, 5, 7],
    "iter + six regions": [0, 4, 5, 7, 14, 15],
    "everything": list(range(base.rmap.n_regions)),
}

# %%
rows = []
for name, regs in subsets.items():
    cfg = base.with_(tracked=frozenset(regs))
    pmf = estimate_pmf(cfg, n=2000)
    rows.append((name, pmf.cardinality, pmf.max_bias, classify(pmf)))
    print(f"{name:24s} card={pmf.cardinality:5d} bias={pmf.max_bias:.3f} {classify(pmf)}")

# %%
# The regions behind each index.
for i in sorted({r for regs in subsets.values() for r in regs}):
    print(i, labels[i])

biases = np.array([r[2] for r in rows])
print("least biased non-trivial subset:", rows[int(np.argmin(biases[1:-1])) + 1][0])
