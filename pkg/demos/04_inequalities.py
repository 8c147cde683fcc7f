"""
Functional inequalities behind the decay estimate
=================================================

The decay proof rests on a few scalar inequalities and on a
Csiszar-Kullback-Pinsker-type bound. Both are checked here on random data.
"""

import numpy as np

from trapflow import build_grid, check_elementary_inequalities, ckp_lower_bound

# %%
report = check_elementary_inequalities(100_000, rng_seed=0)
for name in ("product_sqrt", "log_sqrt", "pinsker_kernel"):
    print(f"{name:<16s} worst scaled margin {report[name]['worst_margin']:.2e}")

# %%
# For f = 2 and g = 1 both sides are known in closed form.
grid = build_grid(1, 8)
lhs, rhs = ckp_lower_bound(np.full(8, 2.0), np.ones(8), grid)
print(f"f = 2, g = 1:  lhs = {lhs:.15f} (2 ln 2 - 1 = {2 * np.log(2) - 1:.15f}),  rhs = {rhs}")

# %%
rng = np.random.default_rng(1)
ratios = []
for _ in range(2000):
    g = 10.0 ** rng.uniform(-2, 2, 16)
    f = 10.0 ** rng.uniform(-2, 2, 16)
    lhs, rhs = ckp_lower_bound(f, g, grid=build_grid(1, 16))
    ratios.append(rhs / lhs)
print(f"rhs / lhs over 2000 random pairs: max {max(ratios):.4f} (never above 1)")
