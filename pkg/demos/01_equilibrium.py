"""
Equilibrium states
==================

The stationary state has flat quasi-Fermi levels: n = n* mu_n exp(psi),
p = p* mu_p exp(-psi) with n* p* = 1 after scaling, and the trap occupancy is
fixed by the two densities. Only the potential is unknown. It solves a
monotone semilinear Poisson equation, which a damped Newton method handles.
"""

import numpy as np

from trapflow import ModelParams, MaterialFields, build_grid, equilibrium_residuals, solve_equilibrium

# %%
# A 1D device with a cosine doping profile and two band-edge fields.
grid = build_grid(1, 64)
x = grid.centers[:, 0]
fields = MaterialFields(
    doping=0.3 * np.cos(np.pi * x) + 0.2,
    v_n=0.5 * np.cos(2 * np.pi * x),
    v_p=0.2 * np.sin(np.pi * x),
)
params = ModelParams(n0=1.0, p0=1.0, tau_n=1.0, tau_p=1.0, eps=1e-2)

eq = solve_equilibrium(grid, fields, params)
print(f"n* = {eq.n_star:.12f}   p* = {eq.p_star:.12f}   n* p* = {eq.n_star * eq.p_star:.3e}")
print("Newton residuals:", " ".join(f"{r:.1e}" for r in eq.newton_history))

# %%
# Every defining relation holds to round-off.
for name, value in equilibrium_residuals(eq, grid, fields, params).items():
    print(f"  {name:<20s} {value:.2e}")

# %%
# The potential barely depends on the trap lifetime.
for eps in (1e-4, 1e-2, 0.5):
    e = solve_equilibrium(grid, fields, params.with_eps(eps))
    print(f"eps = {eps:6.0e}:  max|psi| = {np.max(np.abs(e.psi_inf)):.6f}   min n_tr = {e.ntr_inf.min():.4f}")
