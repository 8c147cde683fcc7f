"""
Uniformity in the trap lifetime
===============================

The decay rate is insensitive to how fast the trap level relaxes. The same
scenario is rerun for trap lifetimes over two decades.
"""

from pathlib import Path

from trapflow.cli import sweep_eps
from trapflow.config import load_config

config = load_config(Path(__file__).resolve().parents[1] / "configs" / "reference.yaml")
table, _ = sweep_eps(config, [1e-3, 1e-2, 1e-1])

for eps, rate, r2 in zip(table["eps"], table["rate"], table["r2"]):
    print(f"eps = {eps:6.0e}   rate = {rate:.5f}   r2 = {r2:.6f}")
print(f"max/min ratio {table['ratio']:.4f} (bound {table['max_ratio']})")
